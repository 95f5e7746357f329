// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rddgp/core/rng.hpp"
#include "rddgp/diffusion/ddim.hpp"
#include "rddgp/diffusion/train.hpp"
#include "rddgp/metrics/metrics.hpp"
#include "rddgp/nn/oracle.hpp"
#include "rddgp/recon/reconstruct.hpp"
#include "rddgp/tomo/fbp.hpp"
#include "rddgp/tomo/measurement.hpp"
#include "rddgp/tomo/phantom.hpp"

namespace fs = std::filesystem;
using namespace rddgp;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

Image random_image(std::size_t h, std::size_t w, std::uint64_t seed, double scale = 1.0) {
  const CounterRng r(seed);
  Image x(h, w);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = scale * r.normal(i);
  return x;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

/// Oracle prior used by the desk tasks: 200 normalized random-ellipse phantoms.
nn::GaussianPrior desk_prior(const tomo::ImageGrid& g) {
  std::vector<Image> s;
  for (std::uint64_t i = 0; i < 200; ++i)
    s.push_back(diffusion::normalize(tomo::make_phantom(g, {tomo::PhantomKind::random_ellipses, 1000 + i, 6})));
  return nn::fit_gaussian_prior(s);
}

nn::DenoiserConfig tiny_config() {
  nn::DenoiserConfig c;
  c.channels_per_level = {8, 16};
  c.blocks_per_level = 1;
  return c;
}

nn::ParamVector randomized(const nn::UNet& net, std::uint64_t seed, double scale) {
  nn::ParamVector p = net.init_params(seed);
  RngStream r(CounterRng(seed).split(77));
  for (const auto& b : p.manifest())
    if (b.name.starts_with("out_conv") || b.name.ends_with(".beta") || b.name.ends_with(".bias"))
      for (std::size_t i = 0; i < b.size(); ++i) p[b.offset + i] = scale * r.next_normal();
  return p;
}

Outcome adjoint_identity() {
  const tomo::ImageGrid g{64, 64, 1.0};
  const auto geo = tomo::ScanGeometry::for_grid(g, 45);
  const auto P = tomo::build_projector(geo, g);
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 100; ++k) {
    const Image x = random_image(64, 64, 2 * k);
    const CounterRng r(2 * k + 1);
    Sinogram y = geo.zeros();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = r.normal(i);
    const double gap = std::abs(dot(P.forward(x), y) - dot(x, P.adjoint(y)));
    worst = std::max(worst, gap / std::sqrt(squared_norm(x) * squared_norm(y)));
  }
  return {worst <= 1e-8, "worst normalized gap " + fmt("%.2e", worst)};
}

Outcome gradients() {
  const nn::UNet net(tiny_config());
  std::vector<std::string> notes;
  bool ok = true;
  auto check = [&](const std::string& name, double err, double tol) {
    ok = ok && err <= tol;
    notes.push_back(name + " " + fmt("%.1e", err));
  };

  {
    const nn::ParamVector p = randomized(net, 7, 0.2);
    const Image x = random_image(16, 16, 3), u = random_image(16, 16, 4), d = random_image(16, 16, 5);
    double worst = 0.0;
    for (int t : {1, 250, 900}) {
      const auto fw = nn::denoise_forward(net, p, x, t);
      const double a = dot(nn::denoise_vjp_input(net, p, fw.tape, u), d);
      const double h = 1e-5;
      const double fd = (dot(u, net.forward(p, x + h * d, t, nullptr)) - dot(u, net.forward(p, x + (-h) * d, t, nullptr))) / (2 * h);
      worst = std::max(worst, rel(a, fd));
    }
    check("input-vjp", worst, 1e-4);
  }
  {
    nn::ParamVector p = randomized(net, 9, 0.2);
    const Image x = random_image(16, 16, 6), u = random_image(16, 16, 8);
    const int t = 123;
    const auto fw = nn::denoise_forward(net, p, x, t);
    const nn::ParamVector g = nn::denoise_grad_params(net, p, fw.tape, u);
    std::vector<std::size_t> coords;
    for (const auto& b : p.manifest()) coords.push_back(b.offset + b.size() / 2);
    RngStream pick(CounterRng(11));
    for (int k = 0; k < 20; ++k)
      coords.push_back(static_cast<std::size_t>(pick.next_int(0, static_cast<std::int64_t>(p.size()) - 1)));
    double worst = 0.0;
    for (std::size_t i : coords) {
      const double h = 1e-5, orig = p[i];
      p[i] = orig + h;
      const double fp = dot(u, net.forward(p, x, t, nullptr));
      p[i] = orig - h;
      const double fm = dot(u, net.forward(p, x, t, nullptr));
      p[i] = orig;
      const double fd = (fp - fm) / (2 * h);
      worst = std::max(worst, std::abs(g[i] - fd) / std::max(std::abs(fd), 1e-3 * g.max_abs()));
    }
    check("param-grad", worst, 1e-4);
  }
  {
    const Image x = random_image(16, 16, 12);
    const Image d = random_image(16, 16, 13);
    const auto r = recon::tv_smooth(x, 1e-3);
    const double h = 1e-6;
    const double fd = (recon::tv_smooth(x + h * d, 1e-3).value - recon::tv_smooth(x + (-h) * d, 1e-3).value) / (2 * h);
    check("tv", rel(dot(r.grad, d), fd), 1e-6);
  }
  {
    const tomo::ImageGrid g{16, 16, 1.0};
    const auto geo = tomo::ScanGeometry::for_grid(g, 8);
    const auto P = tomo::build_projector(geo, g);
    const Sinogram y = P.forward(tomo::shepp_logan(g));
    recon::ObjectiveConfig cfg;
    cfg.steps = 3;
    cfg.lambda1 = 1e-3;
    cfg.lambda2 = 1e-2;
    auto full_chain = [&](const nn::Denoiser& f, const diffusion::DiffusionSchedule& sched, const Image& z) -> double {
      const auto pb = recon::make_problem(P, y, f, sched, cfg);
      const auto e = recon::evaluate(pb, z, true);
      if (max_abs(e.xbar) >= 0.95) return INFINITY;
      const Image d = random_image(16, 16, 21, max_abs(z));
      const double h = 1e-5;
      const double fd = (recon::objective(pb, z + h * d) - recon::objective(pb, z + (-h) * d)) / (2 * h);
      return rel(dot(e.grad, d), fd);
    };
    // A random network on a mild schedule, and the oracle on the production one.
    diffusion::DiffusionSchedule mild;
    for (int t = 0; t <= 10; ++t) mild.alpha.push_back(1.0 - 0.09 * t);
    const nn::NetworkDenoiser fn(std::make_shared<nn::UNet>(tiny_config()),
                                 std::make_shared<nn::ParamVector>(randomized(nn::UNet(tiny_config()), 3, 0.01)));
    check("dF/dz network", full_chain(fn, mild, random_image(16, 16, 6, 0.05)), 1e-4);
    const auto cos = diffusion::cosine_noise_schedule(1000);
    // The ellipse prior's mean sits on the clip at -1, so use a centred prior here.
    const nn::OracleDenoiser fo(nn::GaussianPrior{0.3 * diffusion::normalize(tomo::shepp_logan(g)), 0.02}, cos);
    const Image z = random_image(16, 16, 8);
    check("dF/dz oracle", full_chain(fo, cos, z), 1e-4);
  }
  std::string detail;
  for (const auto& n : notes) detail += (detail.empty() ? "" : ", ") + n;
  return {ok, detail};
}

Outcome ddim_exactness() {
  const tomo::ImageGrid g{32, 32, 1.0};
  const auto sched = diffusion::cosine_noise_schedule(1000);
  const nn::ZeroDenoiser zero;
  const Image x = diffusion::normalize(tomo::make_phantom(g, {tomo::PhantomKind::random_ellipses, 1, 6}));
  auto roundtrip = [&](const nn::Denoiser& f, int S) {
    const auto plan = diffusion::StepPlan::uniform(S, 1000);
    return max_abs_diff(diffusion::ddim_sample(f, diffusion::ddim_invert(f, x, sched, plan), sched, plan).x0, x);
  };
  double zero_err = 0.0;
  for (int S : {3, 10, 50}) zero_err = std::max(zero_err, roundtrip(zero, S));
  const nn::OracleDenoiser oracle(desk_prior(g), sched);
  const double e10 = roundtrip(oracle, 10), e50 = roundtrip(oracle, 50);
  return {zero_err <= 1e-12 && e50 <= 1e-3 && e50 < e10,
          "zero " + fmt("%.1e", zero_err) + ", oracle S=10 " + fmt("%.3e", e10) + ", S=50 " + fmt("%.3e", e50) +
              " (bound 1e-3)"};
}

Outcome cosine_schedule() {
  const std::size_t maxit = 300;
  const double a = recon::cosine_lr(0, maxit, 1e-5, 1e-2), b = recon::cosine_lr(maxit, maxit, 1e-5, 1e-2);
  const double mid = recon::cosine_lr(maxit / 2, maxit, 1e-5, 1e-2);
  bool mono = true;
  for (std::size_t k = 1; k <= maxit; ++k)
    mono = mono && recon::cosine_lr(k, maxit, 1e-5, 1e-2) <= recon::cosine_lr(k - 1, maxit, 1e-5, 1e-2);
  const bool ok = std::abs(a - 1e-2) <= 1e-17 && std::abs(b - 1e-5) <= 1e-20 && rel(mid, 5.005e-3) <= 1e-14 && mono;
  return {ok, "nu_0 " + fmt("%.17g", a) + ", nu_maxit " + fmt("%.17g", b) + ", mid " + fmt("%.17g", mid)};
}

Outcome dsm_training() {
  const nn::UNet net(tiny_config());
  const auto sched = diffusion::cosine_noise_schedule(1000);
  const std::size_t n = 1024;
  const auto source = [](std::size_t, std::size_t i) { return random_image(16, 16, CounterRng(99).split(i).key()); };
  diffusion::TrainConfig tc;
  tc.epochs = 50;
  tc.batch_size = 32;
  tc.optimizer.lr = 2e-3;
  tc.seed = 7;
  const auto r = diffusion::train(net, net.init_params(1), source, n, sched, tc);
  const double oracle = diffusion::gaussian_dsm_minimum(sched, 1.0, 256);
  const double first = r.epoch_loss.front(), last = r.epoch_loss.back();
  return {last < first && std::abs(last / oracle - 1.0) <= 0.10,
          "first " + fmt("%.2f", first) + ", final " + fmt("%.2f", last) + ", oracle minimum " + fmt("%.2f", oracle) +
              " (ratio " + fmt("%.3f", last / oracle) + ")"};
}

struct DeskTask {
  tomo::ImageGrid grid{32, 32, 1.0};
  tomo::ScanGeometry geometry = tomo::ScanGeometry::for_grid(grid, 30);
  tomo::Projector projector = tomo::build_projector(geometry, grid);
  diffusion::DiffusionSchedule schedule = diffusion::cosine_noise_schedule(1000);
  nn::OracleDenoiser oracle{desk_prior(grid), schedule};

  recon::ReconstructionResult run(const Sinogram& y, recon::InitMode im, recon::LrMode lm) const {
    return recon::reconstruct(y, projector, geometry, grid, oracle, schedule, recon::ObjectiveConfig{}, im, lm, 5);
  }
};

Outcome convergence(const DeskTask& task) {
  const Image x = tomo::make_phantom(task.grid, {tomo::PhantomKind::random_ellipses, 1, 6});
  const Sinogram y = tomo::simulate_measurements(task.projector, x, 0.0, 0).data;
  const auto r = task.run(y, recon::InitMode::fbp, recon::LrMode::cosine);
  const auto& first = r.trace.front().terms;
  const bool ok = r.ok && r.final_terms.fidelity <= 0.1 * first.fidelity && r.final_terms.total() < first.total();
  return {ok, "fidelity " + fmt("%.3g", first.fidelity) + " -> " + fmt("%.3g", r.final_terms.fidelity) + ", F " +
                  fmt("%.3g", first.total()) + " -> " + fmt("%.3g", r.final_terms.total())};
}

Outcome ablation(const DeskTask& task) {
  const Image x = tomo::make_phantom(task.grid, {tomo::PhantomKind::random_ellipses, 1, 6});
  const Sinogram y = tomo::simulate_measurements(task.projector, x, 0.05, 11).data;
  auto psnr = [&](recon::InitMode im, recon::LrMode lm) { return metrics::psnr(task.run(y, im, lm).x_star, x); };
  const double fc = psnr(recon::InitMode::fbp, recon::LrMode::cosine);
  const double fk = psnr(recon::InitMode::fbp, recon::LrMode::constant);
  const double rc = psnr(recon::InitMode::random, recon::LrMode::cosine);
  const double rk = psnr(recon::InitMode::random, recon::LrMode::constant);
  return {fc > rc && fc >= fk, "fbp+cosine " + fmt("%.2f", fc) + ", fbp+constant " + fmt("%.2f", fk) +
                                   ", random+cosine " + fmt("%.2f", rc) + ", random+constant " + fmt("%.2f", rk) + " dB"};
}

/// Same ordering over a panel of phantoms; printed, not scored.
std::string ablation_panel(const DeskTask& task) {
  int init_wins = 0, sched_wins = 0;
  const int n = 12;
  for (std::uint64_t s = 1; s <= static_cast<std::uint64_t>(n); ++s) {
    const Image x = tomo::make_phantom(task.grid, {tomo::PhantomKind::random_ellipses, s, 6});
    const Sinogram y = tomo::simulate_measurements(task.projector, x, 0.05, 11).data;
    const double fc = metrics::psnr(task.run(y, recon::InitMode::fbp, recon::LrMode::cosine).x_star, x);
    const double fk = metrics::psnr(task.run(y, recon::InitMode::fbp, recon::LrMode::constant).x_star, x);
    const double rc = metrics::psnr(task.run(y, recon::InitMode::random, recon::LrMode::cosine).x_star, x);
    init_wins += fc > rc;
    sched_wins += fc >= fk;
  }
  return "fbp > random on " + std::to_string(init_wins) + "/" + std::to_string(n) + " phantoms, cosine >= constant on " +
         std::to_string(sched_wins) + "/" + std::to_string(n);
}

Outcome fbp_monotone() {
  const tomo::ImageGrid g{64, 64, 1.0};
  const Image x = tomo::shepp_logan(g);
  double prev = -INFINITY;
  bool ok = true;
  std::string detail;
  for (std::size_t na : {30, 45, 60, 90, 180}) {
    const auto geo = tomo::ScanGeometry::for_grid(g, na);
    const double p = metrics::psnr(tomo::fbp(geo, g, tomo::build_projector(geo, g).forward(x)), x);
    ok = ok && p >= prev;
    prev = p;
    detail += (detail.empty() ? "" : ", ") + std::to_string(na) + ":" + fmt("%.2f", p);
  }
  return {ok, detail + " dB"};
}

Outcome metric_fixtures() {
  const double p = metrics::psnr_from_mse(0.25);
  const tomo::ImageGrid g{32, 32, 1.0};
  const Image a = tomo::shepp_logan(g);
  const Image b = random_image(32, 32, 3, 0.1) + a;
  const bool ok = std::abs(p - 6.0206) <= 1e-4 && std::abs(p - 20.0 * std::log10(2.0)) <= 1e-12 &&
                  metrics::ssim(a, a) == 1.0 && metrics::mse(a, b) == metrics::mse(b, a);
  return {ok, "psnr(0.25) " + fmt("%.10f", p)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "rddgp_acceptance_determinism";
  fs::remove_all(root);
  const std::string base =
      "height = 16\nwidth = 16\nn_angles = 12\ndelta = 0.05\nangles = 8,12,16\nmaxit = 40\nsteps = 4\n"
      "channels = 8,16\nblocks_per_level = 1\ntrain_size = 16\nepochs = 2\nbatch_size = 8\nprior_samples = 50\n";
  const std::vector<std::pair<std::string, std::string>> steps{
      {"phantom", "--oracle-denoiser"},
      {"simulate", ""},
      {"train", ""},
      {"reconstruct", "--oracle-denoiser"},
      {"reconstruct", ""},
      {"ablate", "--oracle-denoiser"},
      {"sweep-angles", "--oracle-denoiser"},
      {"metrics", ""},
  };
  const std::string cli = RDDGP_CLI_PATH;
  // Both runs use the same directory so resolved absolute paths agree.
  auto run_all = [&](std::map<std::string, std::string>& files) -> std::string {
    fs::remove_all(root);
    fs::create_directories(root);
    std::ofstream(root / "phantom.conf", std::ios::binary) << base;
    std::ofstream(root / "experiment.conf", std::ios::binary)
        << base << "sinogram_path = simulate/sinogram.rdgp\nground_truth_path = phantom/phantom.rdgp\n"
        << "weights_path = train/weights.rdgw\nphantom_path = phantom/phantom.rdgp\n"
        << "reconstruction_path = reconstruct-oracle/reconstruction.rdgp\n";
    for (const auto& [cmd, flag] : steps) {
      const std::string out = cmd == "reconstruct" ? (flag.empty() ? "reconstruct-network" : "reconstruct-oracle") : cmd;
      const std::string conf = cmd == "phantom" ? "phantom.conf" : "experiment.conf";
      const std::string line = cli + " " + cmd + " --config " + (root / conf).string() + " --out " +
                               (root / out).string() + " --threads 0 " + flag + " 2>>" + (root / "log.txt").string();
      if (std::system(line.c_str()) != 0) return cmd + " failed";
    }
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file() && e.path().filename() != "log.txt")
        files[fs::relative(e.path(), root).string()] = slurp(e.path());
    return {};
  };
  std::map<std::string, std::string> first, second;
  if (auto err = run_all(first); !err.empty()) return {false, err};
  if (auto err = run_all(second); !err.empty()) return {false, err};
  std::size_t compared = 0;
  for (const auto& [name, bytes] : first) {
    const auto it = second.find(name);
    if (it == second.end() || it->second != bytes) return {false, "differs: " + name};
    ++compared;
  }
  if (second.size() != first.size()) return {false, "file sets differ"};
  return {compared > 20, std::to_string(compared) + " files byte-identical across reruns"};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, double budget_s, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = s < budget_s;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("%s %d %s: %s [%.1f s%s]\n", pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), s,
                in_time ? "" : ", over budget");
    std::fflush(stdout);
  };

  report(1, "adjoint identity", 10, adjoint_identity);
  report(2, "gradient correctness", 120, gradients);
  report(3, "ddim exactness", 60, ddim_exactness);
  report(4, "cosine step size", 1, cosine_schedule);
  report(5, "dsm training", 600, dsm_training);
  const DeskTask task;
  report(6, "latent optimization convergence", 600, [&] { return convergence(task); });
  report(7, "ablation ordering", 1800, [&] { return ablation(task); });
  std::printf("INFO 7 panel: %s\n", ablation_panel(task).c_str());
  report(8, "fbp monotone in angles", 60, fbp_monotone);
  report(9, "metric fixtures", 1, metric_fixtures);
  report(10, "determinism", 300, determinism);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
