#include "mfdag/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "mfdag/baselines.hpp"
#include "mfdag/dataset_io.hpp"
#include "mfdag/errors.hpp"
#include "mfdag/eval.hpp"
#include "mfdag/model_io.hpp"

namespace mfdag {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InputError(where + ": config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw InputError(where + ": unknown key '" + key + "'");
  }
}

double get_double(const json& j, const std::string& key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw InputError("config key '" + key + "' must be a number");
  return j[key].get<double>();
}

long long get_int(const json& j, const std::string& key, long long fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer()) throw InputError("config key '" + key + "' must be an integer");
  return j[key].get<long long>();
}

std::size_t get_positive(const json& j, const std::string& key, std::size_t fallback) {
  const long long v = get_int(j, key, static_cast<long long>(fallback));
  if (v < 1) throw InputError("config key '" + key + "' must be >= 1");
  return static_cast<std::size_t>(v);
}

std::vector<std::size_t> get_counts(const json& j, const std::string& key, std::size_t P) {
  const json& v = j.at(key);
  if (v.is_number_integer() && v.get<long long>() >= 1) return std::vector<std::size_t>(P, v.get<std::size_t>());
  if (v.is_array() && v.size() == P) {
    std::vector<std::size_t> out;
    for (const auto& e : v) {
      if (!e.is_number_integer() || e.get<long long>() < 1) break;
      out.push_back(e.get<std::size_t>());
    }
    if (out.size() == P) return out;
  }
  throw InputError("config key '" + key + "' must be a positive integer or a list of P positive integers");
}

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  return read_json_file(path);
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw InputError(std::string("missing required flag ") + flag);
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  write_file_atomic(path, j.dump(2) + "\n");
}

const std::set<std::string> kSynthKeys = {"P",         "L0",       "L",           "K0",     "K",
                                          "T",         "N",        "seed",        "edge_prob",
                                          "coef_low",  "coef_high", "omega2_true", "r2_true"};
const std::set<std::string> kFitKeys = {"lambda",      "eps0",        "max_em_iter", "seed",
                                        "estep",       "K",           "K0",          "h_tol",
                                        "lr",          "a_init",      "b_init",      "gamma",
                                        "inner_max_iter", "inner_grad_tol", "inner_rel_tol", "w_threshold", "mask",
                                        "method",      "init_model"};

std::string method_of(const json& cfg, const CliOptions& opt) {
  std::string method = "multifun";
  if (cfg.contains("method")) {
    if (!cfg["method"].is_string()) throw InputError("config key 'method' must be a string");
    method = cfg["method"].get<std::string>();
  }
  if (opt.method) method = *opt.method;
  if (method != "multifun" && method != "mfgm" && method != "notears") {
    throw InputError("method must be one of multifun, mfgm, notears");
  }
  return method;
}

void apply_overrides(json& cfg, const CliOptions& opt) {
  if (opt.lambda) cfg["lambda"] = *opt.lambda;
  if (opt.seed) cfg["seed"] = *opt.seed;
  if (opt.w_threshold) cfg["w_threshold"] = *opt.w_threshold;
}

// ---- benchmark ---------------------------------------------------------------

struct Cell {
  std::size_t N, P, L0, K0;
  double lambda;
  std::string method;
  std::uint64_t seed;

  std::string key() const {
    std::ostringstream ss;
    ss << N << ',' << P << ',' << L0 << ',' << K0 << ',' << format_double(lambda) << ',' << method << ','
       << seed;
    return ss.str();
  }
  std::string group() const {
    std::ostringstream ss;
    ss << N << ',' << P << ',' << L0 << ',' << K0 << ',' << format_double(lambda) << ',' << method;
    return ss.str();
  }
};

const char* kBenchHeader =
    "N,P,L0,K0,lambda,method,seed,status,iterations,converged,precision,recall,f1,shd,c_error,mse_est,"
    "mse_true,delta";
const std::vector<std::string> kMetricColumns = {"precision", "recall", "f1",       "shd",
                                                 "c_error",   "mse_est", "mse_true", "delta"};

template <typename T>
std::vector<T> grid_of(const json& cfg, const std::string& key, std::vector<T> fallback) {
  if (!cfg.contains(key)) return fallback;
  const json& v = cfg[key];
  try {
    if (v.is_array()) {
      if (v.empty()) throw InputError("benchmark key '" + key + "' must not be empty");
      return v.get<std::vector<T>>();
    }
    return {v.get<T>()};
  } catch (const json::exception&) {
    throw InputError("benchmark key '" + key + "' has the wrong type");
  }
}

std::string run_cell(const Cell& cell, const json& base_synth, const json& fit_json) {
  std::ostringstream row;
  row << cell.key() << ',';
  try {
    json sj = base_synth;
    sj["N"] = cell.N;
    sj["P"] = cell.P;
    sj["L0"] = cell.L0;
    sj["K0"] = cell.K0;
    sj["seed"] = cell.seed;
    const SynthConfig scfg = synth_config_from_json(sj);
    auto [data, truth] = generate_dataset(scfg);
    json fj = fit_json;
    fj["lambda"] = cell.lambda;
    fj["seed"] = cell.seed;
    if (!fj.contains("K") && !fj.contains("K0")) fj["K0"] = cell.K0;
    const FitConfig fcfg = fit_config_from_json(fj, cell.P);
    const FitReport rep = run_method(cell.method, data, fcfg);
    const EdgeMetrics em = edge_metrics(support(rep.W.W, fcfg.solver.w_threshold), truth.adjacency);
    const double cerr = aligned_c_error(rep.params, truth.params_true);
    const MseDiagnostics mse = mse_diagnostics(data, rep.params, &truth);
    row << "ok," << rep.iterations << ',' << (rep.converged ? 1 : 0) << ',' << format_double(em.precision) << ','
        << format_double(em.recall) << ',' << format_double(em.f1) << ',' << em.shd << ',' << format_double(cerr)
        << ',' << format_double(mse.mse_est) << ',' << format_double(mse.mse_true.value_or(NAN)) << ','
        << format_double(mse.delta.value_or(NAN));
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    row << "error: " << msg << ",0,0,,,,,,,,";
  }
  return row.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string summarize(const std::vector<Cell>& cells, const std::map<std::string, std::string>& rows) {
  std::ostringstream out;
  out << "N,P,L0,K0,lambda,method,count";
  for (const auto& m : kMetricColumns) out << ',' << m << "_mean," << m << "_ci95";
  out << '\n';
  std::vector<std::string> groups;
  std::map<std::string, std::vector<std::vector<double>>> values;
  for (const auto& c : cells) {
    const std::string g = c.group();
    if (!values.count(g)) {
      groups.push_back(g);
      values[g].resize(kMetricColumns.size());
    }
    auto it = rows.find(c.key());
    if (it == rows.end()) continue;
    const auto f = split_csv(it->second);
    if (f.size() < 18 || f[7] != "ok") continue;
    for (std::size_t m = 0; m < kMetricColumns.size(); ++m) {
      const double v = std::strtod(f[10 + m].c_str(), nullptr);
      if (std::isfinite(v)) values[g][m].push_back(v);
    }
  }
  for (const auto& g : groups) {
    const auto& cols = values[g];
    std::size_t count = 0;
    for (const auto& c : cols) count = std::max(count, c.size());
    out << g << ',' << count;
    for (const auto& c : cols) {
      if (c.empty()) {
        out << ",,";
        continue;
      }
      double mean = 0.0;
      for (double v : c) mean += v;
      mean /= static_cast<double>(c.size());
      double var = 0.0;
      for (double v : c) var += (v - mean) * (v - mean);
      const double n = static_cast<double>(c.size());
      const double half = c.size() > 1 ? 1.96 * std::sqrt(var / (n - 1.0)) / std::sqrt(n) : 0.0;
      out << ',' << format_double(mean) << ',' << format_double(half);
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace

SynthConfig synth_config_from_json(const json& j) {
  check_keys(j, kSynthKeys, "generate config");
  if (!j.contains("P")) throw InputError("config key 'P' is required");
  SynthConfig c;
  const std::size_t P = get_positive(j, "P", 1);
  const std::size_t T = get_positive(j, "T", 50);
  const std::size_t N = get_positive(j, "N", 100);
  auto& s = c.shape;
  s.P = P;
  s.T = T;
  s.N = N;
  s.L = j.contains("L") ? get_counts(j, "L", P) : std::vector<std::size_t>(P, get_positive(j, "L0", 1));
  s.K = j.contains("K") ? get_counts(j, "K", P) : std::vector<std::size_t>(P, get_positive(j, "K0", 3));
  const long long seed = get_int(j, "seed", 0);
  if (seed < 0) throw InputError("config key 'seed' must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  c.edge_prob = get_double(j, "edge_prob", c.edge_prob);
  c.coef_low = get_double(j, "coef_low", c.coef_low);
  c.coef_high = get_double(j, "coef_high", c.coef_high);
  c.omega2_true = get_double(j, "omega2_true", c.omega2_true);
  c.r2_true = get_double(j, "r2_true", c.r2_true);
  try {
    c.validate();
  } catch (const InputError& e) {
    throw InputError(std::string("generate config: ") + e.what());
  }
  return c;
}

FitConfig fit_config_from_json(const json& j, std::size_t P) {
  check_keys(j, kFitKeys, "fit config");
  FitConfig c;
  auto& s = c.solver;
  s.lambda = get_double(j, "lambda", s.lambda);
  s.h_tol = get_double(j, "h_tol", s.h_tol);
  s.lr = get_double(j, "lr", s.lr);
  s.a_init = get_double(j, "a_init", s.a_init);
  s.b_init = get_double(j, "b_init", s.b_init);
  s.gamma = get_double(j, "gamma", s.gamma);
  s.inner_max_iter = static_cast<int>(get_int(j, "inner_max_iter", s.inner_max_iter));
  s.inner_grad_tol = get_double(j, "inner_grad_tol", s.inner_grad_tol);
  s.inner_rel_tol = get_double(j, "inner_rel_tol", s.inner_rel_tol);
  s.w_threshold = get_double(j, "w_threshold", s.w_threshold);
  c.eps0 = get_double(j, "eps0", c.eps0);
  c.max_em_iter = static_cast<int>(get_int(j, "max_em_iter", c.max_em_iter));
  const long long seed = get_int(j, "seed", 0);
  if (seed < 0) throw InputError("config key 'seed' must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);
  if (j.contains("estep")) {
    const auto& e = j["estep"];
    if (e == "direct") {
      c.estep = EStepMethod::kDirect;
    } else if (e == "ffbs") {
      c.estep = EStepMethod::kFfbs;
    } else {
      throw InputError("config key 'estep' must be \"direct\" or \"ffbs\"");
    }
  }
  if (j.contains("K")) {
    c.K = get_counts(j, "K", P);
  } else if (j.contains("K0")) {
    c.K = get_counts(j, "K0", P);
  }
  if (j.contains("mask")) {
    try {
      c.mask = mask_from_json(j["mask"], P);
    } catch (const InputError& e) {
      throw InputError(std::string("config key 'mask': ") + e.what());
    }
  }
  if (j.contains("init_model")) {
    if (!j["init_model"].is_string()) throw InputError("config key 'init_model' must be a path");
    c.init = model_from_json(read_json_file(j["init_model"].get<std::string>()));
  }
  try {
    c.validate();
  } catch (const InputError& e) {
    throw InputError(std::string("fit config: ") + e.what());
  }
  return c;
}

FitReport run_method(const std::string& method, const FunctionalDataset& data, const FitConfig& cfg) {
  if (method == "multifun") return fit(data, cfg);
  if (method == "mfgm") return fit_mfgm(data, cfg);
  if (method == "notears") return fit_scalar_notears(data, cfg);
  throw InputError("unknown method '" + method + "'");
}

json fit_output_json(const FitReport& report, const std::string& method, const FitConfig& cfg) {
  json out = model_to_json(report.params);
  json rep;
  rep["method"] = method;
  rep["iterations"] = report.iterations;
  rep["converged"] = report.converged;
  rep["d_history"] = report.d_history;
  rep["q_history"] = report.q_history;
  rep["h_final"] = report.h_final;
  rep["rejected_c_steps"] = report.rejected_c_steps;
  rep["inner_converged"] = report.inner_converged;
  rep["lambda"] = cfg.solver.lambda;
  rep["w_threshold"] = cfg.solver.w_threshold;
  rep["W"] = matrix_to_json(report.W.W);
  out["report"] = std::move(rep);
  return out;
}

int cmd_generate(const CliOptions& opt) {
  require(opt.config, "--config");
  require(opt.out, "--out");
  json cfg = read_config(opt.config);
  if (opt.seed) cfg["seed"] = *opt.seed;
  const SynthConfig sc = synth_config_from_json(cfg);
  auto [data, truth] = generate_dataset(sc);
  write_dataset(opt.out, data, &truth);
  return kExitOk;
}

int cmd_fit(const CliOptions& opt) {
  require(opt.data, "--data");
  require(opt.out, "--out");
  json cfg = read_config(opt.config);
  apply_overrides(cfg, opt);
  if (!opt.init.empty()) cfg["init_model"] = opt.init;
  const std::string method = method_of(cfg, opt);
  const FunctionalDataset data = read_dataset(opt.data);
  const FitConfig fc = fit_config_from_json(cfg, data.shape.P);
  const FitReport report = run_method(method, data, fc);
  write_json(opt.out, fit_output_json(report, method, fc));
  if (!report.converged) {
    std::cerr << "warning: EM stopped after " << report.iterations << " iterations without converging\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

int cmd_eval(const CliOptions& opt) {
  require(opt.model, "--model");
  require(opt.data, "--data");
  require(opt.out, "--out");
  const json doc = read_json_file(opt.model);
  const ModelParams est = model_from_json(doc);
  const FunctionalDataset data = read_dataset(opt.data);
  const auto truth = read_truth(opt.data, data);
  if (!truth) throw InputError("dataset has no ground truth to evaluate against");
  const auto& a = est.shape;
  const auto& b = truth->params_true.shape;
  if (a.P != b.P || a.L != b.L || a.K != b.K || a.T != b.T) {
    throw InputError("model shape does not match the ground truth");
  }

  double thr = 0.3;
  if (doc.contains("report") && doc["report"].contains("w_threshold")) thr = doc["report"]["w_threshold"].get<double>();
  if (opt.w_threshold) thr = *opt.w_threshold;
  Eigen::MatrixXd W = compute_W(est).W;
  if (doc.contains("report") && doc["report"].contains("W")) W = matrix_from_json(doc["report"]["W"], "report.W");
  if (W.rows() != static_cast<Eigen::Index>(a.P) || W.cols() != W.rows()) throw InputError("report.W must be P x P");

  const EdgeMetrics em = edge_metrics(support(W, thr), truth->adjacency);
  const MseDiagnostics mse = mse_diagnostics(data, est, &*truth);
  json out;
  out["precision"] = em.precision;
  out["recall"] = em.recall;
  out["f1"] = em.f1;
  out["shd"] = em.shd;
  out["tp"] = em.tp;
  out["fp"] = em.fp;
  out["fn"] = em.fn;
  out["c_error"] = aligned_c_error(est, truth->params_true);
  out["mse_est"] = mse.mse_est;
  if (mse.mse_true) {
    out["mse_true"] = *mse.mse_true;
    out["delta"] = *mse.delta;
  }
  out["w_threshold"] = thr;
  write_json(opt.out, out);
  return kExitOk;
}

int cmd_benchmark(const CliOptions& opt) {
  require(opt.config, "--config");
  require(opt.out, "--out");
  const json cfg = read_config(opt.config);
  std::set<std::string> allowed = {"N",        "P",        "L0",          "K0",      "lambda",   "method",
                                   "seeds",    "repetitions", "T",        "edge_prob", "coef_low", "coef_high",
                                   "omega2_true", "r2_true", "fit"};
  check_keys(cfg, allowed, "benchmark config");

  json base_synth = json::object();
  for (const char* k : {"T", "edge_prob", "coef_low", "coef_high", "omega2_true", "r2_true"}) {
    if (cfg.contains(k)) base_synth[k] = cfg[k];
  }
  json fit_json = cfg.value("fit", json::object());
  check_keys(fit_json, kFitKeys, "benchmark fit config");
  if (opt.w_threshold) fit_json["w_threshold"] = *opt.w_threshold;

  const auto Ns = grid_of<std::size_t>(cfg, "N", {100});
  const auto Ps = grid_of<std::size_t>(cfg, "P", {5});
  const auto Ls = grid_of<std::size_t>(cfg, "L0", {1});
  const auto Ks = grid_of<std::size_t>(cfg, "K0", {3});
  auto lambdas = grid_of<double>(cfg, "lambda", {0.0});
  if (opt.lambda) lambdas = {*opt.lambda};
  auto methods = grid_of<std::string>(cfg, "method", {"multifun"});
  if (opt.method) methods = {*opt.method};
  std::vector<std::uint64_t> seeds;
  if (cfg.contains("seeds")) {
    seeds = grid_of<std::uint64_t>(cfg, "seeds", {});
  } else {
    const long long reps = get_int(cfg, "repetitions", 10);
    if (reps < 1) throw InputError("benchmark key 'repetitions' must be >= 1");
    const std::uint64_t base = opt.seed.value_or(0);
    for (long long r = 0; r < reps; ++r) seeds.push_back(base + static_cast<std::uint64_t>(r));
  }
  for (const auto& m : methods) {
    if (m != "multifun" && m != "mfgm" && m != "notears") throw InputError("benchmark key 'method': unknown " + m);
  }

  std::vector<Cell> cells;
  for (auto N : Ns)
    for (auto P : Ps)
      for (auto L : Ls)
        for (auto K : Ks)
          for (auto lam : lambdas)
            for (const auto& m : methods)
              for (auto s : seeds) cells.push_back({N, P, L, K, lam, m, s});

  // Resume: rows already present are kept and not recomputed.
  const fs::path out_path = opt.out;
  std::map<std::string, std::string> rows;
  if (fs::exists(out_path)) {
    std::istringstream in(read_file(out_path));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto f = split_csv(line);
      if (f.size() < 7) continue;
      std::string key = f[0];
      for (int i = 1; i < 7; ++i) key += ',' + f[static_cast<std::size_t>(i)];
      rows[key] = line;
    }
  }
  std::vector<const Cell*> todo;
  for (const auto& c : cells) {
    if (!rows.count(c.key())) todo.push_back(&c);
  }

  std::mutex mu;
  auto flush = [&]() {
    std::string text = std::string(kBenchHeader) + "\n";
    std::set<std::string> written;
    for (const auto& c : cells) {
      auto it = rows.find(c.key());
      if (it != rows.end() && written.insert(c.key()).second) text += it->second + "\n";
    }
    for (const auto& [k, line] : rows) {
      if (!written.count(k)) text += line + "\n";
    }
    write_file_atomic(out_path, text);
  };

  std::atomic<std::size_t> next{0};
  const int threads = std::max(1, opt.threads.value_or(1));
  auto worker = [&]() {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      const std::string line = run_cell(*todo[i], base_synth, fit_json);
      std::lock_guard<std::mutex> lock(mu);
      rows[todo[i]->key()] = line;
      flush();
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  flush();

  fs::path summary = out_path;
  summary.replace_filename(out_path.stem().string() + "_summary" + out_path.extension().string());
  write_file_atomic(summary, summarize(cells, rows));

  std::size_t ok = 0;
  for (const auto& c : cells) {
    const auto f = split_csv(rows[c.key()]);
    if (f.size() > 7 && f[7] == "ok") ++ok;
  }
  return ok == 0 && !cells.empty() ? kExitFailure : kExitOk;
}

}  // namespace mfdag
