#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "rddgp/cli/config.hpp"
#include "rddgp/core/io.hpp"
#include "rddgp/diffusion/ddim.hpp"
#include "rddgp/diffusion/train.hpp"
#include "rddgp/metrics/metrics.hpp"
#include "rddgp/nn/oracle.hpp"
#include "rddgp/nn/weights_io.hpp"
#include "rddgp/recon/reconstruct.hpp"
#include "rddgp/tomo/augment.hpp"
#include "rddgp/tomo/fbp.hpp"
#include "rddgp/tomo/measurement.hpp"
#include "rddgp/tomo/phantom.hpp"
#include "rddgp/tomo/projector.hpp"

namespace rddgp::cli {

namespace fs = std::filesystem;

struct RunOptions {
  fs::path out = ".";
  bool oracle_denoiser = false;
  unsigned threads = 0;
  std::ostream* log = &std::cerr;
};

/// Comma-separated table with a header row and LF line endings.
class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path.string());
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

inline std::string num(double v) { return format_double(v); }
inline std::string num(std::size_t v) { return std::to_string(v); }

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
}

inline void prepare_output(const ExperimentConfig& cfg, const RunOptions& opt) {
  fs::create_directories(opt.out);
  write_text(opt.out / "config.resolved", to_text(cfg));
}

inline void save_image(const fs::path& stem, const Image& x) {
  io::write_field(fs::path(stem).replace_extension(".rdgp"), x);
  io::write_png(fs::path(stem).replace_extension(".png"), x);
}

inline Image load_or_make_phantom(const ExperimentConfig& cfg) {
  if (!cfg.phantom_path.empty()) {
    Image x = io::read_image(cfg.phantom_path);
    cfg.grid().expect(x, "phantom");
    return x;
  }
  return tomo::make_phantom(cfg.grid(), cfg.phantom_spec());
}

inline Image load_ground_truth(const ExperimentConfig& cfg) {
  Image x = io::read_image(cfg.ground_truth_path);
  cfg.grid().expect(x, "ground truth");
  return x;
}

/// Samples used to fit the oracle prior, in the normalized domain.
inline std::vector<Image> prior_phantoms(const ExperimentConfig& cfg) {
  std::vector<Image> out;
  for (std::size_t i = 0; i < cfg.prior_samples; ++i)
    out.push_back(diffusion::normalize(tomo::make_phantom(
        cfg.grid(), {tomo::PhantomKind::random_ellipses, cfg.prior_seed + i, cfg.n_ellipses})));
  return out;
}

struct LoadedDenoiser {
  std::unique_ptr<nn::Denoiser> denoiser;
  diffusion::DiffusionSchedule schedule;
  std::string description;
};

/// The Gaussian oracle fitted to random-ellipse phantoms, or trained weights.
inline LoadedDenoiser load_denoiser(const ExperimentConfig& cfg, const RunOptions& opt) {
  LoadedDenoiser d;
  if (opt.oracle_denoiser) {
    d.schedule = diffusion::cosine_noise_schedule(cfg.schedule_T);
    auto prior = nn::fit_gaussian_prior(prior_phantoms(cfg));
    d.description = "gaussian-oracle variance=" + num(prior.variance);
    d.denoiser = std::make_unique<nn::OracleDenoiser>(std::move(prior), d.schedule);
    return d;
  }
  if (cfg.weights_path.empty()) throw ConfigError("weights_path is required unless --oracle-denoiser is given");
  nn::WeightsFile w = nn::load_weights(cfg.weights_path);
  if (w.schedule.T() != cfg.schedule_T)
    throw ConfigError("weights were trained with T=" + std::to_string(w.schedule.T()) + " but schedule_T=" +
                      std::to_string(cfg.schedule_T));
  d.schedule = w.schedule;
  auto net = std::make_shared<const nn::UNet>(w.config);
  auto params = std::make_shared<const nn::ParamVector>(std::move(w.params));
  d.description = "network params=" + std::to_string(params->size());
  d.denoiser = std::make_unique<nn::NetworkDenoiser>(net, params);
  return d;
}

inline void write_trace(const fs::path& path, const recon::ReconstructionResult& r) {
  CsvWriter csv(path, {"iteration", "lr", "fidelity", "tikhonov", "tv", "total"});
  for (const auto& row : r.trace)
    csv.row({num(row.iteration), num(row.lr), num(row.terms.fidelity), num(row.terms.tikhonov), num(row.terms.tv),
             num(row.terms.total())});
}

inline const std::vector<std::string> kMetricHeader{"sample", "n_angles", "method", "psnr", "ssim", "mse"};

inline std::vector<std::string> metric_row(const std::string& sample, std::size_t n_angles, const std::string& method,
                                           const metrics::MetricReport& m) {
  return {sample, num(n_angles), method, num(m.psnr), num(m.ssim), num(m.mse)};
}

// ---------------------------------------------------------------------------

inline void cmd_phantom(const ExperimentConfig& cfg, const RunOptions& opt) {
  prepare_output(cfg, opt);
  save_image(opt.out / "phantom", tomo::make_phantom(cfg.grid(), cfg.phantom_spec()));
}

inline void cmd_simulate(const ExperimentConfig& cfg, const RunOptions& opt) {
  prepare_output(cfg, opt);
  const Image x = load_or_make_phantom(cfg);
  const auto geometry = cfg.geometry();
  const auto P = tomo::build_projector(geometry, cfg.grid(), opt.threads);
  const auto m = tomo::simulate_measurements(P, x, cfg.delta, cfg.seed_noise);
  io::write_field(opt.out / "sinogram.rdgp", m.data);
  io::write_png(opt.out / "sinogram.png", m.data, 0.0, max_abs(m.data));
  write_text(opt.out / "simulate_manifest.txt",
             "n_angles = " + num(geometry.n_angles()) + "\n" + "n_detectors = " + num(geometry.n_detectors) + "\n" +
                 "detector_spacing = " + num(geometry.detector_spacing) + "\n" + "delta = " + num(m.delta) + "\n" +
                 "clean_max_abs = " + num(m.clean_max_abs) + "\n" + "seed_noise = " + std::to_string(cfg.seed_noise) +
                 "\n" + "phantom = " + (cfg.phantom_path.empty() ? tomo::to_string(cfg.phantom_spec().kind) : cfg.phantom_path) +
                 "\n");
}

inline diffusion::DatasetSource training_source(const ExperimentConfig& cfg) {
  const tomo::ImageGrid grid = cfg.grid();
  if (cfg.train_set == "gaussian") {
    const double sd = std::sqrt(cfg.gaussian_variance);
    const CounterRng root(CounterRng(cfg.seed_train).split(0x6761));
    return [grid, sd, root](std::size_t, std::size_t i) {
      const CounterRng r = root.split(i);
      Image x(grid.height, grid.width);
      for (std::size_t k = 0; k < x.size(); ++k) x[k] = sd * r.normal(k);
      return x;
    };
  }
  auto base = std::make_shared<std::vector<Image>>();
  for (std::size_t i = 0; i < cfg.train_size; ++i)
    base->push_back(tomo::make_phantom(grid, {tomo::PhantomKind::random_ellipses, cfg.prior_seed + i, cfg.n_ellipses}));
  const bool aug = cfg.augment;
  const CounterRng root(CounterRng(cfg.seed_train).split(0x617567));
  return [base, aug, root](std::size_t epoch, std::size_t i) {
    const Image& x = (*base)[i];
    return diffusion::normalize(aug ? tomo::augment(x, root.split(epoch).bits(i)) : x);
  };
}

inline void cmd_train(const ExperimentConfig& cfg, const RunOptions& opt) {
  prepare_output(cfg, opt);
  if (cfg.train_size == 0) throw ConfigError("train_size must be >= 1");
  const nn::UNet net(cfg.denoiser());
  const auto sched = diffusion::cosine_noise_schedule(cfg.schedule_T);
  diffusion::TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.optimizer.lr = cfg.train_lr;
  tc.seed = cfg.seed_train;
  CsvWriter csv(opt.out / "train_loss.csv", {"epoch", "loss"});
  auto result = diffusion::train(net, net.init_params(cfg.seed_train), training_source(cfg), cfg.train_size, sched, tc,
                                 [&](std::size_t epoch, double loss) {
                                   csv.row({num(epoch + 1), num(loss)});
                                   *opt.log << "epoch " << epoch + 1 << " loss " << loss << "\n";
                                 });
  nn::save_weights(opt.out / "weights.rdgw", {cfg.denoiser(), sched, std::move(result.params)});
}

struct ReconInputs {
  Sinogram y;
  tomo::ScanGeometry geometry;
  tomo::Projector projector;
};

inline ReconInputs load_recon_inputs(const ExperimentConfig& cfg, const RunOptions& opt) {
  if (cfg.sinogram_path.empty()) throw ConfigError("sinogram_path is required");
  Sinogram y = io::read_sinogram(cfg.sinogram_path);
  auto geometry = cfg.geometry();
  geometry.expect(y, "sinogram");
  auto P = tomo::build_projector(geometry, cfg.grid(), opt.threads);
  return {std::move(y), std::move(geometry), std::move(P)};
}

inline void cmd_reconstruct(const ExperimentConfig& cfg, const RunOptions& opt) {
  prepare_output(cfg, opt);
  const auto in = load_recon_inputs(cfg, opt);
  const auto den = load_denoiser(cfg, opt);
  const auto grid = cfg.grid();
  const Image x_fbp = tomo::fbp(in.geometry, grid, in.y, cfg.window());
  const auto r = recon::reconstruct(in.y, in.projector, in.geometry, grid, *den.denoiser, den.schedule, cfg.objective(),
                                    recon::parse_init_mode(cfg.init_mode), recon::parse_lr_mode(cfg.lr_mode),
                                    cfg.seed_init);
  *opt.log << "reconstruct: " << den.description << ", " << r.trace.size() << " iterations, " << r.wall_seconds
           << " s\n";
  if (!r.ok) *opt.log << "reconstruct: aborted: " << r.diagnostic << "\n";
  save_image(opt.out / "fbp", x_fbp);
  save_image(opt.out / "reconstruction", r.x_star);
  io::write_field(opt.out / "latent.rdgp", r.z_star);
  write_trace(opt.out / "trace.csv", r);
  if (!cfg.ground_truth_path.empty()) {
    const Image gt = load_ground_truth(cfg);
    const std::string sample = fs::path(cfg.ground_truth_path).stem().string();
    CsvWriter csv(opt.out / "metrics.csv", kMetricHeader);
    auto add = [&](const std::string& method, const Image& x) {
      csv.row(metric_row(sample, in.geometry.n_angles(), method, metrics::evaluate(x, gt)));
    };
    add("fbp", x_fbp);
    add("rddgp", r.x_star);
  }
  if (!r.ok) throw NumericError(r.diagnostic);
}

inline void cmd_ablate(const ExperimentConfig& cfg, const RunOptions& opt) {
  prepare_output(cfg, opt);
  if (cfg.ground_truth_path.empty()) throw ConfigError("ablate needs ground_truth_path");
  const auto in = load_recon_inputs(cfg, opt);
  const auto den = load_denoiser(cfg, opt);
  const Image gt = load_ground_truth(cfg);
  CsvWriter csv(opt.out / "summary.csv", {"mode", "init_mode", "lr_mode", "psnr", "ssim"});
  for (auto init : {recon::InitMode::fbp, recon::InitMode::random})
    for (auto lr : {recon::LrMode::cosine, recon::LrMode::constant}) {
      const std::string mode = recon::to_string(init) + "+" + recon::to_string(lr);
      const auto r = recon::reconstruct(in.y, in.projector, in.geometry, cfg.grid(), *den.denoiser, den.schedule,
                                        cfg.objective(), init, lr, cfg.seed_init);
      if (!r.ok) throw NumericError(mode + ": " + r.diagnostic);
      const auto m = metrics::evaluate(r.x_star, gt);
      *opt.log << "ablate " << mode << ": psnr " << m.psnr << " ssim " << m.ssim << "\n";
      const std::string stem = recon::to_string(init) + "_" + recon::to_string(lr);
      save_image(opt.out / ("ablate_" + stem), r.x_star);
      write_trace(opt.out / ("trace_" + stem + ".csv"), r);
      csv.row({mode, recon::to_string(init), recon::to_string(lr), num(m.psnr), num(m.ssim)});
    }
}

inline void cmd_sweep_angles(const ExperimentConfig& cfg, const RunOptions& opt) {
  prepare_output(cfg, opt);
  const Image x = load_or_make_phantom(cfg);
  const auto den = load_denoiser(cfg, opt);
  const auto grid = cfg.grid();
  CsvWriter csv(opt.out / "sweep.csv", {"n_angles", "fbp_psnr", "fbp_ssim", "rddgp_psnr", "rddgp_ssim"});
  for (std::size_t na : cfg.angles) {
    const auto geometry = cfg.geometry(na);
    const auto P = tomo::build_projector(geometry, grid, opt.threads);
    const auto m = tomo::simulate_measurements(P, x, cfg.delta, cfg.seed_noise);
    const Image x_fbp = tomo::fbp(geometry, grid, m.data, cfg.window());
    const auto r = recon::reconstruct(m.data, P, geometry, grid, *den.denoiser, den.schedule, cfg.objective(),
                                      recon::parse_init_mode(cfg.init_mode), recon::parse_lr_mode(cfg.lr_mode),
                                      cfg.seed_init);
    if (!r.ok) throw NumericError("n_angles " + num(na) + ": " + r.diagnostic);
    const auto mf = metrics::evaluate(x_fbp, x), mr = metrics::evaluate(r.x_star, x);
    *opt.log << "sweep n_angles " << na << ": fbp " << mf.psnr << " dB, rddgp " << mr.psnr << " dB\n";
    csv.row({num(na), num(mf.psnr), num(mf.ssim), num(mr.psnr), num(mr.ssim)});
  }
}

inline void cmd_metrics(const ExperimentConfig& cfg, const RunOptions& opt) {
  prepare_output(cfg, opt);
  if (cfg.reconstruction_path.empty() || cfg.ground_truth_path.empty())
    throw ConfigError("metrics needs reconstruction_path and ground_truth_path");
  const Image x = io::read_image(cfg.reconstruction_path);
  const Image gt = load_ground_truth(cfg);
  CsvWriter csv(opt.out / "metrics.csv", kMetricHeader);
  csv.row(metric_row(fs::path(cfg.ground_truth_path).stem().string(), cfg.n_angles,
                     fs::path(cfg.reconstruction_path).stem().string(), metrics::evaluate(x, gt)));
}

}  // namespace rddgp::cli
