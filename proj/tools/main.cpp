#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "rddgp/cli/commands.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  bool oracle = false;
  unsigned threads = 0;
};

using Command = std::function<void(const rddgp::cli::ExperimentConfig&, const rddgp::cli::RunOptions&)>;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-view CT reconstruction with a diffusion generative prior"};
  app.require_subcommand(1);
  Flags flags;

  const std::map<std::string, std::pair<std::string, Command>> commands{
      {"phantom", {"write a phantom image", rddgp::cli::cmd_phantom}},
      {"simulate", {"simulate a noisy sinogram", rddgp::cli::cmd_simulate}},
      {"train", {"train the denoiser", rddgp::cli::cmd_train}},
      {"reconstruct", {"reconstruct from a sinogram", rddgp::cli::cmd_reconstruct}},
      {"ablate", {"run the init x step-size grid", rddgp::cli::cmd_ablate}},
      {"sweep-angles", {"FBP and reconstruction over angle counts", rddgp::cli::cmd_sweep_angles}},
      {"metrics", {"compare a reconstruction to ground truth", rddgp::cli::cmd_metrics}},
  };
  std::string chosen;
  for (const auto& [name, entry] : commands) {
    CLI::App* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", flags.config, "key = value experiment config");
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--seed", flags.seed, "override every seed");
    sub->add_flag("--oracle-denoiser", flags.oracle, "use the Gaussian oracle instead of trained weights");
    sub->add_option("--threads", flags.threads, "projector build threads (0 = single-threaded)");
    sub->callback([&chosen, n = name] { chosen = n; });
  }
  CLI11_PARSE(app, argc, argv);

  try {
    rddgp::cli::ExperimentConfig cfg;
    if (!flags.config.empty()) cfg = rddgp::cli::load_config(flags.config);
    if (flags.seed) cfg.set_all_seeds(*flags.seed);
    cfg.validate();
    rddgp::cli::RunOptions opt;
    opt.out = flags.out;
    opt.oracle_denoiser = flags.oracle;
    opt.threads = flags.threads;
    commands.at(chosen).second(cfg, opt);
  } catch (const std::exception& e) {
    std::cerr << "rddgp " << chosen << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
