#include <functional>
#include <memory>

#include "commands.hpp"

namespace {

using namespace gemcli;

struct Entry {
  std::unique_ptr<Command> command;
  std::function<int(const json&, std::ostream&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian eigen models: build, refine, fit, regress and serve"};
  app.require_subcommand(1);
  std::vector<Entry> entries;
  auto add = [&](const char* name, const char* description, std::vector<OptionSpec> specs,
                 std::function<int(const json&, std::ostream&)> run) {
    entries.push_back({std::make_unique<Command>(app, name, description, std::move(specs)), std::move(run)});
  };
  add("synth", "Generate a synthetic multi-view dataset", synthOptions(), runSynth);
  add("distill", "Build eigenbases from a directory of registered clouds", distillOptions(), runDistill);
  add("refine", "Refine eigenbases photometrically against a dataset", refineOptions(), runRefine);
  add("fit", "Fit coefficients to target images", fitOptions(), runFit);
  add("render", "Render a model or a cloud", renderOptions(), runRender);
  add("traverse", "Render a sweep of one eigen component", traverseOptions(), runTraverse);
  add("regress-train", "Train the feature-to-coefficient regressor", regressTrainOptions(), runRegressTrain);
  add("regress-apply", "Regress coefficients from features", regressApplyOptions(), runRegressApply);
  add("metrics", "Compare two images", metricsOptions(), runMetrics);
  add("info", "Summarize a model", infoOptions(), runInfo);
  add("serve", "Serve a model over HTTP", serveOptions(), runServe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  for (const auto& e : entries) {
    if (!e.command->app()->parsed()) continue;
    try {
      const json cfg = e.command->resolve();
      std::cerr << "config " << cfg.dump() << "\n";
      return e.run(cfg, std::cout);
    } catch (const UsageError& err) {
      std::cerr << "error: " << err.what() << "\n";
      return 2;
    } catch (const gem::Error& err) {
      std::cerr << "error: " << err.what() << "\n";
      return 3;
    } catch (const nlohmann::json::exception& err) {
      std::cerr << "error: " << err.what() << "\n";
      return 3;
    } catch (const std::filesystem::filesystem_error& err) {
      std::cerr << "error: " << err.what() << "\n";
      return 3;
    }
  }
  return 2;
}
