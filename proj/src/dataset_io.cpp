#include "mfdag/dataset_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>
#include <unistd.h>

#include "mfdag/errors.hpp"
#include "mfdag/model_io.hpp"

namespace mfdag {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::size_t get_count(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_integer() || j[key].get<long long>() < 1) {
    throw InputError(std::string("manifest: '") + key + "' must be a positive integer");
  }
  return j[key].get<std::size_t>();
}

std::vector<std::size_t> get_counts(const json& j, const char* key, std::size_t P) {
  const json& v = j.at(key);
  if (v.is_number_integer()) return std::vector<std::size_t>(P, v.get<std::size_t>());
  if (!v.is_array() || v.size() != P) {
    throw InputError(std::string("manifest: '") + key + "' must be an integer or a list of P integers");
  }
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_integer() || e.get<long long>() < 1) {
      throw InputError(std::string("manifest: '") + key + "' entries must be positive integers");
    }
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("cannot write " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move temporary file into " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json_file(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("missing file " + path.string());
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(path.filename().string() + ": malformed JSON: " + e.what());
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string adjacency_to_csv(const BoolMatrix& adj) {
  std::string out;
  for (Index i = 0; i < adj.rows(); ++i) {
    for (Index j = 0; j < adj.cols(); ++j) {
      if (j > 0) out += ',';
      out += adj(i, j) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

BoolMatrix adjacency_from_csv(const std::string& text, std::size_t P) {
  BoolMatrix adj = BoolMatrix::Constant(idx(P), idx(P), false);
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split(line, ',');
    if (row >= P || cells.size() != P) throw InputError("adjacency.csv: expected a P x P matrix");
    for (std::size_t j = 0; j < P; ++j) {
      if (cells[j] != "0" && cells[j] != "1") {
        throw InputError("adjacency.csv line " + std::to_string(row + 1) + ": entries must be 0 or 1");
      }
      adj(idx(row), idx(j)) = cells[j] == "1";
    }
    ++row;
  }
  if (row != P) throw InputError("adjacency.csv: expected " + std::to_string(P) + " rows");
  return adj;
}

void write_dataset(const fs::path& dir, const FunctionalDataset& data, const GroundTruth* truth) {
  data.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
  const auto& s = data.shape;

  json manifest;
  manifest["P"] = s.P;
  manifest["L"] = s.L;
  manifest["K"] = s.K;
  manifest["T"] = s.T;
  manifest["N"] = s.N;
  manifest["grid"] = std::vector<double>(data.grid.data(), data.grid.data() + data.grid.size());
  manifest["has_truth"] = truth != nullptr;

  std::string csv = "sample,node,function,time_index,value\n";
  csv.reserve(csv.size() + static_cast<std::size_t>(data.values.size()) * 32);
  for (std::size_t n = 0; n < s.N; ++n) {
    for (std::size_t j = 0; j < s.P; ++j) {
      for (std::size_t l = 0; l < s.L[j]; ++l) {
        const std::string prefix =
            std::to_string(n) + ',' + std::to_string(j) + ',' + std::to_string(l) + ',';
        for (std::size_t t = 0; t < s.T; ++t) {
          csv += prefix;
          csv += std::to_string(t);
          csv += ',';
          csv += format_double(data.values(idx(n), idx(s.obs_offset(j, l) + t)));
          csv += '\n';
        }
      }
    }
  }
  write_file_atomic(dir / "data.csv", csv);

  if (truth != nullptr) {
    write_file_atomic(dir / "adjacency.csv", adjacency_to_csv(truth->adjacency));
    json tp = model_to_json(truth->params_true);
    tp["order"] = truth->order;
    write_file_atomic(dir / "truth_params.json", tp.dump(2) + "\n");
    std::string lat;
    for (Index n = 0; n < truth->latents.rows(); ++n) {
      for (Index m = 0; m < truth->latents.cols(); ++m) {
        if (m > 0) lat += ',';
        lat += format_double(truth->latents(n, m));
      }
      lat += '\n';
    }
    write_file_atomic(dir / "latent.csv", lat);
  }
  // The manifest goes last so a complete manifest implies complete data.
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

FunctionalDataset read_dataset(const fs::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  if (!manifest.is_object()) throw InputError("manifest.json: expected an object");
  FunctionalDataset data;
  auto& s = data.shape;
  try {
    s.P = get_count(manifest, "P");
    s.T = get_count(manifest, "T");
    s.N = get_count(manifest, "N");
    if (!manifest.contains("L")) throw InputError("manifest: missing 'L'");
    s.L = get_counts(manifest, "L", s.P);
    if (manifest.contains("K")) {
      s.K = get_counts(manifest, "K", s.P);
    } else {
      s.K.assign(s.P, std::min<std::size_t>(3, std::max<std::size_t>(1, s.T - 1)));
    }
    if (manifest.contains("grid")) {
      const auto g = manifest.at("grid").get<std::vector<double>>();
      if (g.size() != s.T) throw InputError("manifest: 'grid' must have T entries");
      data.grid = Eigen::Map<const Eigen::VectorXd>(g.data(), idx(g.size()));
    } else {
      data.grid = uniform_grid(s.T);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("manifest.json: ") + e.what());
  }
  s.validate();

  const fs::path csv_path = dir / "data.csv";
  if (!fs::exists(csv_path)) throw InputError("missing file " + csv_path.string());
  const std::string text = read_file(csv_path);
  data.values = Eigen::MatrixXd::Zero(idx(s.N), idx(s.obs_dim()));
  std::vector<unsigned char> seen(s.N * s.obs_dim(), 0);
  std::size_t line_no = 0, pos = 0, count = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line = trim(std::string_view(text).substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line_no == 1) {
      if (line != "sample,node,function,time_index,value") {
        throw InputError("data.csv line 1: expected header sample,node,function,time_index,value");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    std::size_t n = 0, j = 0, l = 0, t = 0;
    double v = 0.0;
    const std::string where = "data.csv line " + std::to_string(line_no) + ": ";
    if (cells.size() != 5 || !parse_number(cells[0], n) || !parse_number(cells[1], j) ||
        !parse_number(cells[2], l) || !parse_number(cells[3], t) || !parse_number(cells[4], v)) {
      throw InputError(where + "expected sample,node,function,time_index,value");
    }
    if (n >= s.N || j >= s.P || l >= s.L[j] || t >= s.T) throw InputError(where + "index out of range");
    if (!std::isfinite(v)) throw InputError(where + "value is not finite");
    const std::size_t col = s.obs_offset(j, l) + t;
    unsigned char& flag = seen[n * s.obs_dim() + col];
    if (flag) throw InputError(where + "duplicate entry");
    flag = 1;
    data.values(idx(n), idx(col)) = v;
    ++count;
  }
  if (count != seen.size()) {
    throw InputError("data.csv: expected " + std::to_string(seen.size()) + " values, found " + std::to_string(count));
  }
  data.validate();
  return data;
}

std::optional<GroundTruth> read_truth(const fs::path& dir, const FunctionalDataset& data) {
  const json manifest = read_json_file(dir / "manifest.json");
  if (!manifest.value("has_truth", false)) return std::nullopt;
  GroundTruth truth;
  const json tp = read_json_file(dir / "truth_params.json");
  truth.params_true = model_from_json(tp);
  truth.params_raw = truth.params_true;
  if (tp.contains("order")) truth.order = tp["order"].get<std::vector<std::size_t>>();
  const auto& s = truth.params_true.shape;
  if (s.P != data.shape.P || s.L != data.shape.L || s.T != data.shape.T) {
    throw InputError("truth_params.json: shape does not match the dataset");
  }
  truth.adjacency = adjacency_from_csv(read_file(dir / "adjacency.csv"), s.P);
  const fs::path lat = dir / "latent.csv";
  if (fs::exists(lat)) {
    const std::string text = read_file(lat);
    truth.latents.resize(idx(data.shape.N), idx(s.latent_dim()));
    std::istringstream in(text);
    std::string line;
    Index row = 0;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      const auto cells = split(line, ',');
      if (row >= truth.latents.rows() || cells.size() != s.latent_dim()) {
        throw InputError("latent.csv line " + std::to_string(row + 1) + ": wrong size");
      }
      for (std::size_t m = 0; m < cells.size(); ++m) {
        if (!parse_number(cells[m], truth.latents(row, idx(m)))) {
          throw InputError("latent.csv line " + std::to_string(row + 1) + ": bad number");
        }
      }
      ++row;
    }
    if (row != truth.latents.rows()) throw InputError("latent.csv: expected N rows");
  }
  return truth;
}

}  // namespace mfdag
