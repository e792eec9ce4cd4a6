#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif

#include "matsteer/commands.hpp"

namespace {

using namespace matsteer;

struct Options {
  std::string config_path;
  CliOverrides overrides;
};

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("--config", opt.config_path, "INI config file")->required();
  cmd->add_option_function<std::uint64_t>("--seed", [&](std::uint64_t v) { opt.overrides.seed = v; },
                                          "data and training seed");
  cmd->add_option_function<int>("--layer", [&](int v) { opt.overrides.layer = v; }, "activation layer");
  cmd->add_option_function<double>("--lambda-pos", [&](double v) { opt.overrides.lambda_pos = v; });
  cmd->add_option_function<double>("--lambda-sparse", [&](double v) { opt.overrides.lambda_sparse = v; });
  cmd->add_option_function<double>("--lambda-ortho", [&](double v) { opt.overrides.lambda_ortho = v; });
  cmd->add_option_function<std::string>("--out", [&](const std::string& v) { opt.overrides.out_dir = v; },
                                        "output directory");
  cmd->add_option_function<double>("--threshold", [&](double v) { opt.overrides.threshold = v; },
                                   "gate threshold for intervened-token counts");
}

RunConfig resolve(const Options& opt) {
  RunConfig cfg = load_config(opt.config_path);
  apply_overrides(cfg, opt.overrides);
  cfg.validate();
  return cfg;
}

int run(const std::string& command, const RunConfig& cfg) {
  if (command == "gen") {
    const Manifest m = cmd_gen(cfg);
    std::cout << "wrote train/dev/test (" << m.get("train.records") << '/' << m.get("dev.records") << '/'
              << m.get("test.records") << " records) to " << cfg.out_dir << '\n';
  } else if (command == "train") {
    const auto out = cmd_train(cfg);
    const auto& last = out.trace.steps.back();
    std::cout << "trained " << out.trace.epochs_run << " epochs, " << out.trace.steps.size()
              << " steps, final loss " << last.total << " (mmd " << last.mmd << ")\n"
              << "bundle: " << cfg.bundle_path() << '\n';
  } else if (command == "eval") {
    std::cout << report_text(cmd_eval(cfg));
  } else if (command == "ablate") {
    for (const auto& r : cmd_ablate(cfg)) std::cout << r.label << ": " << fixed(r.metric) << '\n';
  } else if (command == "compare") {
    std::cout << aligned_table(compare_rows(cmd_compare(cfg), false));
  } else if (command == "layersearch") {
    const auto r = cmd_layersearch(cfg);
    for (std::size_t i = 0; i < r.layers.size(); ++i)
      std::cout << "layer " << r.layers[i] << ": " << fixed(r.metrics[i]) << '\n';
    std::cout << "best layer " << r.best_layer << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-attribute activation steering with token-level gates"};
  app.require_subcommand(1);
  Options opt;
  for (const char* name : {"gen", "train", "eval", "ablate", "compare", "layersearch"}) add_common(app.add_subcommand(name), opt);
  app.get_subcommand("gen")->description("generate train/dev/test activation files");
  app.get_subcommand("train")->description("train steering parameters and write a bundle");
  app.get_subcommand("eval")->description("gating report for a trained bundle");
  app.get_subcommand("ablate")->description("component ablation table");
  app.get_subcommand("compare")->description("compare steering methods and token selection");
  app.get_subcommand("layersearch")->description("pick the toy-LM layer with the best dev flip rate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    const std::string command = app.get_subcommands().front()->get_name();
    return run(command, resolve(opt));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kIo);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kNumeric);
  }
}
