// Command-line front end: generate, fit, eval, benchmark.

#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mfdag/commands.hpp"
#include "mfdag/errors.hpp"

int main(int argc, char** argv) {
  using namespace mfdag;
  CLI::App app{"Causal structure learning for multivariate functional data"};
  app.require_subcommand(1);
  CliOptions opt;
  std::string method;
  double lambda = 0.0, w_threshold = 0.0;
  std::uint64_t seed = 0;
  int threads = 1;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON config file");
    sub->add_option("--seed", seed, "Random seed (overrides config)");
  };
  auto fitting = [&](CLI::App* sub) {
    sub->add_option("--method", method, "multifun | mfgm | notears")
        ->check(CLI::IsMember({"multifun", "mfgm", "notears"}));
    sub->add_option("--lambda", lambda, "Group-lasso weight (overrides config)");
    sub->add_option("--w-threshold", w_threshold, "Edge threshold on W");
  };

  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset directory");
  common(gen);
  gen->add_option("--out", opt.out, "Output dataset directory")->required();

  auto* fitc = app.add_subcommand("fit", "Fit a model to a dataset directory");
  common(fitc);
  fitting(fitc);
  fitc->add_option("--data", opt.data, "Dataset directory")->required();
  fitc->add_option("--out", opt.out, "Output model JSON")->required();
  fitc->add_option("--init", opt.init, "Warm-start model JSON");

  auto* evalc = app.add_subcommand("eval", "Score a model against a dataset's ground truth");
  evalc->add_option("--model", opt.model, "Model JSON")->required();
  evalc->add_option("--data", opt.data, "Dataset directory with ground truth")->required();
  evalc->add_option("--out", opt.out, "Output metrics JSON")->required();
  evalc->add_option("--w-threshold", w_threshold, "Edge threshold on W");

  auto* bench = app.add_subcommand("benchmark", "Run a grid of generate/fit/eval cells");
  common(bench);
  fitting(bench);
  bench->add_option("--out", opt.out, "Output CSV")->required();
  bench->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }

  auto set_if = [](CLI::App* sub, const char* name) { return sub->count(name) > 0; };
  CLI::App* used = app.get_subcommands().front();
  if (used != evalc && set_if(used, "--seed")) opt.seed = seed;
  if (used == fitc || used == bench) {
    if (set_if(used, "--method")) opt.method = method;
    if (set_if(used, "--lambda")) opt.lambda = lambda;
  }
  if (used != gen && set_if(used, "--w-threshold")) opt.w_threshold = w_threshold;
  if (used == bench && set_if(used, "--threads")) opt.threads = threads;

  try {
    if (used == gen) return cmd_generate(opt);
    if (used == fitc) return cmd_fit(opt);
    if (used == evalc) return cmd_eval(opt);
    return cmd_benchmark(opt);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}
