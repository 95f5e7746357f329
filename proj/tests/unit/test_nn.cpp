#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "rddgp/core/rng.hpp"
#include "rddgp/diffusion/schedule.hpp"
#include "rddgp/nn/oracle.hpp"
#include "rddgp/nn/unet.hpp"
#include "rddgp/nn/weights_io.hpp"

using namespace rddgp;
using namespace rddgp::nn;
using Catch::Approx;

namespace {

Image random_image(std::size_t h, std::size_t w, std::uint64_t seed, double scale = 1.0) {
  const CounterRng r(seed);
  Image x(h, w);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = scale * r.normal(i);
  return x;
}

DenoiserConfig small_config() {
  DenoiserConfig c;
  c.channels_per_level = {8, 16};
  c.blocks_per_level = 1;
  return c;
}

/// Random non-zero weights everywhere, including the output head, so that
/// gradients flow through every layer.
ParamVector randomized(const UNet& net, std::uint64_t seed) {
  ParamVector p = net.init_params(seed);
  RngStream r(CounterRng(seed).split(77));
  for (const auto& b : p.manifest())
    if (b.name.starts_with("out_conv") || b.name.ends_with(".beta") || b.name.ends_with(".bias"))
      for (std::size_t i = 0; i < b.size(); ++i) p[b.offset + i] = 0.2 * r.next_normal();
  return p;
}

double relative_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12}); }

}  // namespace

TEST_CASE("time embedding") {
  const Tensor e0 = time_embedding(0, 8, 3, 4);
  REQUIRE(e0.c == 8);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < e0.plane(); ++i) {
      CHECK(e0.channel(2 * k)[i] == 0.0);
      CHECK(e0.channel(2 * k + 1)[i] == 1.0);
    }
  const Tensor e1 = time_embedding(1, 8, 3, 4), e2 = time_embedding(2, 8, 3, 4);
  for (std::size_t k = 0; k < 8; ++k)
    for (std::size_t i = 1; i < e1.plane(); ++i) CHECK(e1.channel(k)[i] == e1.channel(k)[0]);
  CHECK(e1.channel(0)[0] == Approx(std::sin(1.0)));
  CHECK(e1.channel(3)[0] == Approx(std::cos(1.0 / std::pow(10000.0, 2.0 / 8.0))));
  CHECK_FALSE(e1.v == e2.v);
  CHECK_THROWS(time_embedding(-1, 8, 2, 2));
}

TEST_CASE("config validation") {
  DenoiserConfig c;
  CHECK_NOTHROW(c.validate());
  c.channels_per_level = {16, 30};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = DenoiserConfig{};
  c.n_levels = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = DenoiserConfig{};
  c.attention = true;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("parameter init") {
  const UNet net(DenoiserConfig{});
  const ParamVector a = net.init_params(3), b = net.init_params(3);
  CHECK(a == b);
  CHECK_FALSE(a == net.init_params(4));
  CHECK(a.all_finite());
  CHECK(a.manifest_covers_payload());
  CHECK(a.same_layout(net.layout()));
  for (double v : a.slice("out_conv.weight")) CHECK(v == 0.0);
  const Image x = random_image(16, 16, 1);
  const Image eps = net.forward(a, x, 500, nullptr);
  CHECK(eps.rows() == 16);
  CHECK(eps.cols() == 16);
  CHECK(max_abs(eps) == 0.0);
}

TEST_CASE("forward is deterministic and rejects bad input") {
  const UNet net(small_config());
  const ParamVector p = randomized(net, 5);
  const Image x = random_image(16, 16, 2);
  const Image a = net.forward(p, x, 10, nullptr);
  CHECK(a == net.forward(p, x, 10, nullptr));
  CHECK(max_abs(a) > 0.0);
  CHECK_FALSE(a == net.forward(p, x, 11, nullptr));
  Image bad = x;
  bad[3] = std::nan("");
  CHECK_THROWS_AS(net.forward(p, bad, 10, nullptr), NumericError);
  CHECK_THROWS_AS(net.forward(p, random_image(15, 16, 1), 10, nullptr), DimensionError);
  CHECK_THROWS_AS(net.forward(UNet(DenoiserConfig{}).init_params(1), x, 10, nullptr), DimensionError);
}

TEST_CASE("input vjp matches central differences") {
  const UNet net(small_config());
  const ParamVector p = randomized(net, 7);
  const Image x = random_image(16, 16, 3);
  const Image u = random_image(16, 16, 4), d = random_image(16, 16, 5);
  for (int t : {1, 250, 900}) {
    const auto fw = denoise_forward(net, p, x, t);
    const double analytic = dot(denoise_vjp_input(net, p, fw.tape, u), d);
    const double h = 1e-5;
    const double fd = (dot(u, net.forward(p, x + h * d, t, nullptr)) - dot(u, net.forward(p, x + (-h) * d, t, nullptr))) /
                      (2 * h);
    CHECK(relative_error(analytic, fd) <= 1e-4);
  }
  const auto fw = denoise_forward(net, p, x, 30);
  CHECK(max_abs(denoise_vjp_input(net, p, fw.tape, Image(16, 16))) == 0.0);
  const Image v1 = denoise_vjp_input(net, p, fw.tape, u), v2 = denoise_vjp_input(net, p, fw.tape, 3.0 * u);
  CHECK(max_abs_diff(v2, 3.0 * v1) <= 1e-12 * max_abs(v2));
}

TEST_CASE("parameter gradient matches central differences") {
  const UNet net(small_config());
  ParamVector p = randomized(net, 9);
  const Image x = random_image(16, 16, 6), u = random_image(16, 16, 8);
  const int t = 123;
  const auto fw = denoise_forward(net, p, x, t);
  const ParamVector g = denoise_grad_params(net, p, fw.tape, u);
  CHECK(g.same_layout(p));
  CHECK(g.size() == p.size());

  // 20 coordinates spread over all blocks, one from every block first.
  std::vector<std::size_t> coords;
  for (const auto& b : p.manifest()) coords.push_back(b.offset + b.size() / 2);
  RngStream pick(CounterRng(11));
  while (coords.size() < p.manifest().size() + 20)
    coords.push_back(static_cast<std::size_t>(pick.next_int(0, static_cast<std::int64_t>(p.size()) - 1)));
  std::size_t checked = 0;
  for (std::size_t i : coords) {
    const double h = 1e-5, orig = p[i];
    p[i] = orig + h;
    const double fp = dot(u, net.forward(p, x, t, nullptr));
    p[i] = orig - h;
    const double fm = dot(u, net.forward(p, x, t, nullptr));
    p[i] = orig;
    const double fd = (fp - fm) / (2 * h);
    INFO("coordinate " << i);
    CHECK(std::abs(g[i] - fd) <= 1e-4 * std::max(std::abs(fd), 1e-3 * g.max_abs()));
    ++checked;
  }
  CHECK(checked >= 20);
  const ParamVector z = denoise_grad_params(net, p, fw.tape, Image(16, 16));
  for (double v : z.values()) REQUIRE(v == 0.0);
}

TEST_CASE("stale tapes are rejected") {
  const UNet net(small_config());
  ParamVector p = randomized(net, 1);
  const Image x = random_image(16, 16, 1);
  const auto fw = denoise_forward(net, p, x, 5);
  p[0] += 1e-3;
  CHECK_THROWS_AS(denoise_vjp_input(net, p, fw.tape, x), std::logic_error);
  CHECK_THROWS_AS(denoise_grad_params(net, p, fw.tape, x), std::logic_error);
  CHECK_THROWS_AS(denoise_vjp_input(net, p, ActivationTape{}, x), std::logic_error);
}

TEST_CASE("gaussian oracle denoiser") {
  const auto sched = diffusion::cosine_noise_schedule(1000);
  const std::size_t n = 8;
  GaussianPrior prior{random_image(n, n, 1, 0.3), 0.2};

  SECTION("point-mass limit recovers the injected noise") {
    GaussianPrior tight{prior.mean, 1e-14};
    const Image eps = random_image(n, n, 2);
    const int t = 400;
    const double a = sched[t];
    Image xt(n, n);
    for (std::size_t i = 0; i < xt.size(); ++i) xt[i] = std::sqrt(a) * prior.mean[i] + std::sqrt(1 - a) * eps[i];
    CHECK(max_abs_diff(gaussian_oracle_denoiser(tight, sched, xt, t), eps) <= 1e-9);
  }
  SECTION("zero mean over the marginal") {
    const int t = 300;
    const double a = sched[t];
    double acc = 0.0, acc2 = 0.0;
    const int draws = 10000;
    for (int k = 0; k < draws; ++k) {
      const CounterRng r(CounterRng(5).split(static_cast<std::uint64_t>(k)));
      Image xt(n, n);
      for (std::size_t i = 0; i < xt.size(); ++i)
        xt[i] = std::sqrt(a) * (prior.mean[i] + std::sqrt(prior.variance) * r.normal(2 * i)) +
                std::sqrt(1 - a) * r.normal(2 * i + 1);
      const double v = gaussian_oracle_denoiser(prior, sched, xt, t)[7];
      acc += v;
      acc2 += v * v;
    }
    const double mean = acc / draws, sd = std::sqrt(acc2 / draws - mean * mean);
    CHECK(std::abs(mean) <= 4.0 * sd / std::sqrt(double(draws)));
  }
  SECTION("affine in x_t with the closed-form gain") {
    const int t = 650;
    const double a = sched[t];
    const double gain = std::sqrt(1 - a) / (a * prior.variance + 1 - a);
    const Image x1 = random_image(n, n, 3), x2 = random_image(n, n, 4);
    const Image f0 = gaussian_oracle_denoiser(prior, sched, Image(n, n), t);
    const Image f1 = gaussian_oracle_denoiser(prior, sched, x1, t);
    const Image f12 = gaussian_oracle_denoiser(prior, sched, 2.0 * x1 + (-0.5) * x2, t);
    const Image f2 = gaussian_oracle_denoiser(prior, sched, x2, t);
    CHECK(max_abs_diff(f1 - f0, gain * x1) <= 1e-12);
    CHECK(max_abs_diff(f12 - f0, 2.0 * (f1 - f0) + (-0.5) * (f2 - f0)) <= 1e-12);
    const OracleDenoiser od(prior, sched);
    const auto lin = od.linearize(x1, t);
    CHECK(lin.output == f1);
    CHECK(max_abs_diff(lin.vjp(x2), gain * x2) <= 1e-15);
  }
  SECTION("step zero is the noise-free limit") {
    CHECK(max_abs(gaussian_oracle_denoiser(prior, sched, random_image(n, n, 9), 0)) == 0.0);
  }
  SECTION("invalid priors and schedules are rejected") {
    CHECK_THROWS(gaussian_oracle_denoiser(GaussianPrior{prior.mean, 0.0}, sched, prior.mean, 3));
    diffusion::DiffusionSchedule broken{{1.0, 0.0}};
    CHECK_THROWS_AS(gaussian_oracle_denoiser(prior, broken, prior.mean, 1), NumericError);
    CHECK_THROWS_AS(gaussian_oracle_denoiser(prior, sched, Image(4, 4), 3), DimensionError);
  }
  SECTION("prior fit") {
    std::vector<Image> samples;
    for (std::uint64_t k = 0; k < 400; ++k) {
      Image s = random_image(n, n, 100 + k, std::sqrt(0.2));
      s += prior.mean;
      samples.push_back(s);
    }
    const GaussianPrior fit = fit_gaussian_prior(samples);
    CHECK(fit.variance == Approx(0.2).epsilon(0.05));
    CHECK(max_abs_diff(fit.mean, prior.mean) < 0.15);
  }
}

TEST_CASE("weights file roundtrip and corruption checks") {
  DenoiserConfig c = small_config();
  const UNet net(c);
  WeightsFile w{c, diffusion::cosine_noise_schedule(50), randomized(net, 3)};
  const auto bytes = encode_weights(w);
  const WeightsFile back = decode_weights(bytes);
  CHECK(back.config == c);
  CHECK(back.schedule == w.schedule);
  CHECK(back.params == w.params);

  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(decode_weights(flipped), FormatError);
  auto short_file = bytes;
  short_file.resize(bytes.size() - 9);
  CHECK_THROWS_AS(decode_weights(short_file), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "rddgp_test_nn.rdgw";
  save_weights(path, w);
  CHECK(load_weights(path).params == w.params);
}
