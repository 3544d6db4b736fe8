#include "mfdag/model_io.hpp"

#include "mfdag/errors.hpp"

namespace mfdag {

using nlohmann::json;

namespace {

std::size_t read_count(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_integer() || j.at(key).get<long long>() < 0) {
    throw InputError(std::string("shape.") + key + " must be a non-negative integer");
  }
  return j.at(key).get<std::size_t>();
}

std::vector<std::size_t> read_counts(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    throw InputError(std::string("shape.") + key + " must be a list of integers");
  }
  std::vector<std::size_t> out;
  for (const auto& v : j.at(key)) {
    if (!v.is_number_integer() || v.get<long long>() < 0) {
      throw InputError(std::string("shape.") + key + " must be a list of integers");
    }
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

}  // namespace

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw InputError(what + " must be a nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  if (!j[0].is_array()) throw InputError(what + " must be a nested array");
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw InputError(what + " has ragged rows");
    }
    for (Eigen::Index k = 0; k < cols; ++k) {
      const auto& v = row[static_cast<std::size_t>(k)];
      if (!v.is_number()) throw InputError(what + " must contain numbers");
      m(i, k) = v.get<double>();
    }
  }
  return m;
}

json shape_to_json(const ProblemShape& s) {
  return json{{"P", s.P}, {"L", s.L}, {"K", s.K}, {"T", s.T}, {"N", s.N}};
}

ProblemShape shape_from_json(const json& j) {
  if (!j.is_object()) throw InputError("shape must be an object");
  ProblemShape s;
  s.P = read_count(j, "P");
  s.L = read_counts(j, "L");
  s.K = read_counts(j, "K");
  s.T = read_count(j, "T");
  s.N = read_count(j, "N");
  s.validate();
  return s;
}

json mask_to_json(const EdgeMask& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.size(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.size(); ++j) row.push_back(m.allowed(i, j) ? 1 : 0);
    rows.push_back(std::move(row));
  }
  return rows;
}

EdgeMask mask_from_json(const json& j, std::size_t P) {
  if (!j.is_array() || j.size() != P) throw InputError("mask must be a P x P array");
  EdgeMask m(P);
  for (std::size_t i = 0; i < P; ++i) {
    if (!j[i].is_array() || j[i].size() != P) throw InputError("mask must be a P x P array");
    for (std::size_t k = 0; k < P; ++k) {
      const auto& v = j[i][k];
      bool on = false;
      if (v.is_boolean()) {
        on = v.get<bool>();
      } else if (v.is_number()) {
        on = v.get<double>() != 0.0;
      } else {
        throw InputError("mask entries must be 0/1 or booleans");
      }
      m.set(i, k, on);
    }
  }
  return m;
}

json model_to_json(const ModelParams& p) {
  p.check_consistent();
  const std::size_t P = p.shape.P;
  json cl = json::array(), ck = json::array(), basis = json::array();
  for (std::size_t i = 0; i < P; ++i) {
    json cl_row = json::array(), ck_row = json::array();
    for (std::size_t j = 0; j < P; ++j) {
      cl_row.push_back(matrix_to_json(p.CL(i, j)));
      ck_row.push_back(matrix_to_json(p.CK(i, j)));
    }
    cl.push_back(std::move(cl_row));
    ck.push_back(std::move(ck_row));
    basis.push_back(matrix_to_json(p.basis[i]));
  }
  return json{{"shape", shape_to_json(p.shape)}, {"CL", cl},          {"CK", ck},
              {"B", basis},                     {"r2", p.r2},        {"omega2", p.omega2},
              {"mask", mask_to_json(p.mask)}};
}

namespace {

Eigen::MatrixXd block_from_json(const json& blocks, std::size_t i, std::size_t j,
                                Eigen::Index rows, Eigen::Index cols, const char* name) {
  const std::string what = std::string(name) + "[" + std::to_string(i) + "][" + std::to_string(j) + "]";
  Eigen::MatrixXd m = matrix_from_json(blocks[i][j], what);
  if (m.size() == 0 && rows * cols == 0) return Eigen::MatrixXd::Zero(rows, cols);
  if (m.rows() != rows || m.cols() != cols) throw InputError(what + " has the wrong shape");
  return m;
}

}  // namespace

ModelParams model_from_json(const json& j) {
  if (!j.is_object()) throw InputError("model document must be an object");
  for (const char* key : {"shape", "CL", "CK", "B", "r2", "omega2"}) {
    if (!j.contains(key)) throw InputError(std::string("model is missing key '") + key + "'");
  }
  ModelParams p = ModelParams::zeros(shape_from_json(j.at("shape")));
  const auto& s = p.shape;
  const std::size_t P = s.P;
  const auto& cl = j.at("CL");
  const auto& ck = j.at("CK");
  auto square = [P](const json& v) {
    if (!v.is_array() || v.size() != P) return false;
    for (const auto& row : v) {
      if (!row.is_array() || row.size() != P) return false;
    }
    return true;
  };
  if (!square(cl)) throw InputError("CL must be a P x P list of matrices");
  if (!square(ck)) throw InputError("CK must be a P x P list of matrices");
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t k = 0; k < P; ++k) {
      p.CL(i, k) = block_from_json(cl, i, k, static_cast<Eigen::Index>(s.L[i]),
                                   static_cast<Eigen::Index>(s.L[k]), "CL");
      p.CK(i, k) = block_from_json(ck, i, k, static_cast<Eigen::Index>(s.K[i]),
                                   static_cast<Eigen::Index>(s.K[k]), "CK");
    }
  }
  const auto& basis = j.at("B");
  if (!basis.is_array() || basis.size() != P) throw InputError("B must list one matrix per node");
  for (std::size_t i = 0; i < P; ++i) {
    p.basis[i] = matrix_from_json(basis[i], "B[" + std::to_string(i) + "]");
    if (p.basis[i].rows() != static_cast<Eigen::Index>(s.T) ||
        p.basis[i].cols() != static_cast<Eigen::Index>(s.K[i])) {
      throw InputError("B[" + std::to_string(i) + "] must be T x K");
    }
  }
  const auto& r2 = j.at("r2");
  if (!r2.is_array() || r2.size() != s.total_functions()) {
    throw InputError("r2 must have sum(L) entries");
  }
  for (std::size_t k = 0; k < r2.size(); ++k) {
    if (!r2[k].is_number() || r2[k].get<double>() < 0.0) {
      throw InputError("r2 entries must be non-negative numbers");
    }
    p.r2[k] = r2[k].get<double>();
  }
  if (!j.at("omega2").is_number()) throw InputError("omega2 must be a number");
  p.omega2 = j.at("omega2").get<double>();
  if (j.contains("mask")) p.mask = mask_from_json(j.at("mask"), P);
  return p;
}

}  // namespace mfdag
