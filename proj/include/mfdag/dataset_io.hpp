#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "mfdag/dataset.hpp"
#include "mfdag/synth.hpp"

namespace mfdag {

// Dataset directory:
//   manifest.json  {P, L, K, T, N, grid, has_truth}
//   data.csv       sample,node,function,time_index,value (0-based, one row per value)
//   adjacency.csv  P rows of comma-separated 0/1 (only with truth)
//   truth_params.json, latent.csv (only with truth)

/// Writes `content` to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);
/// Parses a JSON file; IoError if unreadable, InputError if malformed.
nlohmann::json read_json_file(const std::filesystem::path& path);

std::string format_double(double v);

void write_dataset(const std::filesystem::path& dir, const FunctionalDataset& data, const GroundTruth* truth);

/// Reads manifest.json and data.csv. Malformed rows raise InputError with the line number.
FunctionalDataset read_dataset(const std::filesystem::path& dir);

/// Truth files of a generated dataset, or nullopt if the manifest says none.
std::optional<GroundTruth> read_truth(const std::filesystem::path& dir, const FunctionalDataset& data);

std::string adjacency_to_csv(const BoolMatrix& adj);
BoolMatrix adjacency_from_csv(const std::string& text, std::size_t P);

}  // namespace mfdag
