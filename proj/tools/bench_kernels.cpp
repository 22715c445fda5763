// Times each dense kernel's serial reference against its OpenMP variant and
// checks that the two produce bitwise-identical output. Exits nonzero on any
// mismatch, so it doubles as a quick numeric sanity check on new hardware.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wtal/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using wtal::kern::Unary;

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

double best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    if (ms < best) best = ms;
  }
  return best;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct Row {
  std::string name;
  std::string shape;
  double serial_ms = 0.0;
  double par_ms = 0.0;
  bool match = false;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel benchmark"};
  int reps = 5;
  int scale = 1;
  app.add_option("--reps", reps, "timed repetitions per kernel (best is kept)")
      ->check(CLI::PositiveNumber);
  app.add_option("--scale", scale, "multiply problem sizes by this factor")
      ->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  std::mt19937_64 rng(20240831);
  std::vector<Row> rows;

  // Each case runs the serial kernel into one buffer and the parallel kernel
  // into another, then compares bytes. Outputs that double as accumulators
  // (gemm with beta, axpy, adam) are reset from a pristine copy inside the
  // timed closure so every repetition does identical work.
  {
    const int m = 192 * scale, n = 192, k = 192;
    const auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
    const auto b = random_vec(static_cast<std::size_t>(k) * n, rng);
    std::vector<double> cs(static_cast<std::size_t>(m) * n, 0.0);
    std::vector<double> cp(cs.size(), 0.0);
    Row row{"gemm", std::to_string(m) + "x" + std::to_string(k) + "x" +
                        std::to_string(n)};
    row.serial_ms = best_of(reps, [&] {
      wtal::kern::serial::gemm(false, false, m, n, k, 1.0, a.data(), b.data(),
                               0.0, cs.data());
    });
    row.par_ms = best_of(reps, [&] {
      wtal::kern::par::gemm(false, false, m, n, k, 1.0, a.data(), b.data(),
                            0.0, cp.data());
    });
    row.match = bitwise_equal(cs, cp);
    rows.push_back(row);
  }
  {
    const int m = 192 * scale, n = 192, k = 192;
    const auto a = random_vec(static_cast<std::size_t>(k) * m, rng);
    const auto b = random_vec(static_cast<std::size_t>(n) * k, rng);
    std::vector<double> cs(static_cast<std::size_t>(m) * n, 0.0);
    std::vector<double> cp(cs.size(), 0.0);
    Row row{"gemm(T,T)", std::to_string(m) + "x" + std::to_string(k) + "x" +
                             std::to_string(n)};
    row.serial_ms = best_of(reps, [&] {
      wtal::kern::serial::gemm(true, true, m, n, k, 1.0, a.data(), b.data(),
                               0.0, cs.data());
    });
    row.par_ms = best_of(reps, [&] {
      wtal::kern::par::gemm(true, true, m, n, k, 1.0, a.data(), b.data(), 0.0,
                            cp.data());
    });
    row.match = bitwise_equal(cs, cp);
    rows.push_back(row);
  }
  {
    const int r = 2048 * scale, c = 384;
    const auto in = random_vec(static_cast<std::size_t>(r) * c, rng);
    std::vector<double> outs(in.size()), outp(in.size());
    Row row{"row_softmax", std::to_string(r) + "x" + std::to_string(c)};
    row.serial_ms = best_of(reps, [&] {
      wtal::kern::serial::row_softmax(r, c, in.data(), outs.data());
    });
    row.par_ms = best_of(
        reps, [&] { wtal::kern::par::row_softmax(r, c, in.data(), outp.data()); });
    row.match = bitwise_equal(outs, outp);
    rows.push_back(row);
  }
  {
    const int r = 2048 * scale, c = 384;
    const auto in = random_vec(static_cast<std::size_t>(r) * c, rng);
    const auto gamma = random_vec(c, rng);
    const auto beta = random_vec(c, rng);
    std::vector<double> outs(in.size()), outp(in.size());
    std::vector<double> means(r), meanp(r), rstds(r), rstdp(r);
    Row row{"row_layer_norm", std::to_string(r) + "x" + std::to_string(c)};
    row.serial_ms = best_of(reps, [&] {
      wtal::kern::serial::row_layer_norm(r, c, in.data(), gamma.data(),
                                         beta.data(), wtal::kern::kLayerNormEps,
                                         outs.data(), means.data(),
                                         rstds.data());
    });
    row.par_ms = best_of(reps, [&] {
      wtal::kern::par::row_layer_norm(r, c, in.data(), gamma.data(),
                                      beta.data(), wtal::kern::kLayerNormEps,
                                      outp.data(), meanp.data(), rstdp.data());
    });
    row.match = bitwise_equal(outs, outp) && bitwise_equal(means, meanp) &&
                bitwise_equal(rstds, rstdp);
    rows.push_back(row);
  }
  {
    const int r = 2048 * scale, c = 384;
    const auto in = random_vec(static_cast<std::size_t>(r) * c, rng);
    std::vector<double> outs(in.size()), outp(in.size());
    std::vector<double> invs(r), invp(r);
    Row row{"row_l2_normalize", std::to_string(r) + "x" + std::to_string(c)};
    row.serial_ms = best_of(reps, [&] {
      wtal::kern::serial::row_l2_normalize(r, c, in.data(),
                                           wtal::kern::kL2NormEps, outs.data(),
                                           invs.data());
    });
    row.par_ms = best_of(reps, [&] {
      wtal::kern::par::row_l2_normalize(r, c, in.data(), wtal::kern::kL2NormEps,
                                        outp.data(), invp.data());
    });
    row.match = bitwise_equal(outs, outp) && bitwise_equal(invs, invp);
    rows.push_back(row);
  }
  {
    const std::size_t n = (std::size_t{1} << 22) * static_cast<std::size_t>(scale);
    const auto in = random_vec(n, rng);
    std::vector<double> outs(n), outp(n);
    Row row{"unary_map(gelu)", std::to_string(n)};
    row.serial_ms = best_of(reps, [&] {
      wtal::kern::serial::unary_map(Unary::Gelu, n, in.data(), outs.data());
    });
    row.par_ms = best_of(reps, [&] {
      wtal::kern::par::unary_map(Unary::Gelu, n, in.data(), outp.data());
    });
    row.match = bitwise_equal(outs, outp);
    rows.push_back(row);
  }
  {
    const std::size_t n = (std::size_t{1} << 22) * static_cast<std::size_t>(scale);
    const auto x = random_vec(n, rng);
    const auto y0 = random_vec(n, rng);
    std::vector<double> ys(n), yp(n);
    Row row{"axpy", std::to_string(n)};
    row.serial_ms = best_of(reps, [&] {
      ys = y0;
      wtal::kern::serial::axpy(n, 0.37, x.data(), ys.data());
    });
    row.par_ms = best_of(reps, [&] {
      yp = y0;
      wtal::kern::par::axpy(n, 0.37, x.data(), yp.data());
    });
    row.match = bitwise_equal(ys, yp);
    rows.push_back(row);
  }
  {
    const std::size_t n = (std::size_t{1} << 21) * static_cast<std::size_t>(scale);
    const auto w0 = random_vec(n, rng);
    const auto g = random_vec(n, rng);
    const auto m0 = random_vec(n, rng);
    auto v0 = random_vec(n, rng);
    for (double& x : v0) x = x * x;  // second moments must be nonnegative
    std::vector<double> ws(n), wp(n), ms(n), mp(n), vs(n), vp(n);
    Row row{"adam_update", std::to_string(n)};
    row.serial_ms = best_of(reps, [&] {
      ws = w0;
      ms = m0;
      vs = v0;
      wtal::kern::serial::adam_update(n, ws.data(), g.data(), ms.data(),
                                      vs.data(), 7, 1e-3, 0.9, 0.999, 1e-8);
    });
    row.par_ms = best_of(reps, [&] {
      wp = w0;
      mp = m0;
      vp = v0;
      wtal::kern::par::adam_update(n, wp.data(), g.data(), mp.data(), vp.data(),
                                   7, 1e-3, 0.9, 0.999, 1e-8);
    });
    row.match = bitwise_equal(ws, wp) && bitwise_equal(ms, mp) &&
                bitwise_equal(vs, vp);
    rows.push_back(row);
  }

  int threads = 1;
#ifdef _OPENMP
  threads = omp_get_max_threads();
#endif
  std::printf("openmp: %s, max threads: %d, reps: %d, scale: %d\n",
              wtal::kern::openmp_enabled() ? "on" : "off", threads, reps,
              scale);
  std::printf("%-18s %14s %12s %12s %9s %7s\n", "kernel", "shape",
              "serial ms", "openmp ms", "speedup", "match");
  bool all_match = true;
  for (const Row& row : rows) {
    std::printf("%-18s %14s %12.3f %12.3f %9.2f %7s\n", row.name.c_str(),
                row.shape.c_str(), row.serial_ms, row.par_ms,
                row.par_ms > 0.0 ? row.serial_ms / row.par_ms : 0.0,
                row.match ? "yes" : "NO");
    all_match = all_match && row.match;
  }
  if (!all_match) {
    std::fprintf(stderr, "error: serial and OpenMP outputs differ\n");
    return 1;
  }
  return 0;
}
