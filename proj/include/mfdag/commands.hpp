#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"
#include "mfdag/em.hpp"
#include "mfdag/synth.hpp"

namespace mfdag {

/// Exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitInput = 2,
  kExitIo = 3,
  kExitNotConverged = 4,
};

/// Command-line values. Flags that are set override the matching config keys.
struct CliOptions {
  std::string config;
  std::string data;
  std::string out;
  std::string model;
  std::string init;
  std::optional<std::string> method;
  std::optional<double> lambda;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<double> w_threshold;
};

/// Parses a generator config. Keys: P, L0 (or L), K0 (or K), T, N, seed,
/// edge_prob, coef_low, coef_high, omega2_true, r2_true.
SynthConfig synth_config_from_json(const nlohmann::json& j);

/// Parses a fit config for a problem with P nodes. Keys: lambda, eps0,
/// max_em_iter, seed, estep, K or K0, h_tol, lr, a_init, b_init, gamma,
/// inner_max_iter, inner_grad_tol, w_threshold, mask, method, init_model.
FitConfig fit_config_from_json(const nlohmann::json& j, std::size_t P);

/// Runs the named method ("multifun", "mfgm" or "notears").
FitReport run_method(const std::string& method, const FunctionalDataset& data, const FitConfig& cfg);

/// Model document plus report fields.
nlohmann::json fit_output_json(const FitReport& report, const std::string& method, const FitConfig& cfg);

int cmd_generate(const CliOptions& opt);
int cmd_fit(const CliOptions& opt);
int cmd_eval(const CliOptions& opt);
int cmd_benchmark(const CliOptions& opt);

}  // namespace mfdag
