#pragma once

#include <string>

#include <Eigen/Dense>

#include "json.hpp"
#include "mfdag/params.hpp"

namespace mfdag {

// Model documents: {shape, CL, CK, B, r2, omega2, mask}. CL and CK are P x P
// nested lists of row-major matrices indexed [i][j] for the edge i -> j; B is
// a list of T x K[j] row-major matrices; r2 is flat in (j, l) order; mask is a
// P x P list of 0/1.

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
/// Parses a row-major nested array. Throws InputError naming `what` on bad input.
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const std::string& what);

nlohmann::json shape_to_json(const ProblemShape& s);
ProblemShape shape_from_json(const nlohmann::json& j);

nlohmann::json mask_to_json(const EdgeMask& m);
EdgeMask mask_from_json(const nlohmann::json& j, std::size_t P);

nlohmann::json model_to_json(const ModelParams& p);
ModelParams model_from_json(const nlohmann::json& j);

}  // namespace mfdag
