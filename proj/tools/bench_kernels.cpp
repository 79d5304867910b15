// Times the OpenMP kernels against the serial reference implementation on
// the layer sizes that dominate training, and verifies the outputs agree
// bit for bit while at it.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "gfcnn/kernels.hpp"
#include "gfcnn/kernels_ref.hpp"
#include "gfcnn/rng.hpp"

using namespace gfcnn;
using clock_t_ = std::chrono::steady_clock;

namespace {

std::vector<float> rand_vec(std::size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

template <class F>
double time_best_of(int reps, F&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = clock_t_::now();
    fn();
    const double dt =
        std::chrono::duration<double>(clock_t_::now() - t0).count();
    best = std::min(best, dt);
  }
  return best;
}

void report(const std::string& name, double serial_s, double parallel_s,
            bool match) {
  std::printf("%-34s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   %s\n",
              name.c_str(), serial_s * 1e3, parallel_s * 1e3,
              serial_s / parallel_s, match ? "outputs identical" : "MISMATCH");
}

void bench_conv(std::size_t cin, std::size_t h, std::size_t w, std::size_t cout,
                int reps) {
  Rng rng(1);
  const std::size_t oh = h - 2, ow = w - 2;
  auto x = rand_vec(cin * h * w, rng);
  auto k = rand_vec(cout * cin * 9, rng);
  auto b = rand_vec(cout, rng);
  std::vector<float> y1(cout * oh * ow), y2(y1.size());

  const double ts = time_best_of(reps, [&] {
    kernels::reference::conv2d_forward(x.data(), cin, h, w, k.data(), b.data(),
                                       cout, 3, 3, y2.data());
  });
  const double tp = time_best_of(reps, [&] {
    kernels::conv2d_forward(x.data(), cin, h, w, k.data(), b.data(), cout, 3,
                            3, y1.data());
  });
  char name[64];
  std::snprintf(name, sizeof name, "conv2d %zux%zux%zu -> %zu ch", cin, h, w,
                cout);
  report(name, ts, tp, y1 == y2);
}

void bench_conv_backward(std::size_t cin, std::size_t h, std::size_t w,
                         std::size_t cout, int reps) {
  Rng rng(2);
  const std::size_t oh = h - 2, ow = w - 2;
  auto x = rand_vec(cin * h * w, rng);
  auto k = rand_vec(cout * cin * 9, rng);
  auto gy = rand_vec(cout * oh * ow, rng);
  std::vector<float> gk1(k.size()), gk2(k.size()), gb1(cout), gb2(cout);
  std::vector<float> gx1(x.size()), gx2(x.size());

  const double ts = time_best_of(reps, [&] {
    std::fill(gk2.begin(), gk2.end(), 0.f);
    std::fill(gb2.begin(), gb2.end(), 0.f);
    std::fill(gx2.begin(), gx2.end(), 0.f);
    kernels::reference::conv2d_backward_params(x.data(), gy.data(), cin, h, w,
                                               cout, 3, 3, gk2.data(),
                                               gb2.data());
    kernels::reference::conv2d_backward_input(gy.data(), k.data(), cin, h, w,
                                              cout, 3, 3, gx2.data());
  });
  const double tp = time_best_of(reps, [&] {
    std::fill(gk1.begin(), gk1.end(), 0.f);
    std::fill(gb1.begin(), gb1.end(), 0.f);
    std::fill(gx1.begin(), gx1.end(), 0.f);
    kernels::conv2d_backward_params(x.data(), gy.data(), cin, h, w, cout, 3, 3,
                                    gk1.data(), gb1.data());
    kernels::conv2d_backward_input(gy.data(), k.data(), cin, h, w, cout, 3, 3,
                                   gx1.data());
  });
  char name[64];
  std::snprintf(name, sizeof name, "conv2d backward %zux%zux%zu -> %zu", cin,
                h, w, cout);
  report(name, ts, tp, gk1 == gk2 && gb1 == gb2 && gx1 == gx2);
}

void bench_matmul(std::size_t m, std::size_t k, std::size_t n, int reps) {
  Rng rng(3);
  auto a = rand_vec(m * k, rng);
  auto b = rand_vec(k * n, rng);
  std::vector<float> c1(m * n), c2(m * n);
  const double ts = time_best_of(reps, [&] {
    kernels::reference::matmul(a.data(), b.data(), c2.data(), m, k, n);
  });
  const double tp = time_best_of(
      reps, [&] { kernels::matmul(a.data(), b.data(), c1.data(), m, k, n); });
  char name[64];
  std::snprintf(name, sizeof name, "matmul %zux%zu * %zux%zu", m, k, k, n);
  report(name, ts, tp, c1 == c2);
}

void bench_affine(std::size_t m_in, std::size_t m_out, int reps) {
  Rng rng(4);
  auto x = rand_vec(m_in, rng);
  auto w = rand_vec(m_in * m_out, rng);
  auto b = rand_vec(m_out, rng);
  std::vector<float> y1(m_out), y2(m_out);
  const double ts = time_best_of(reps, [&] {
    kernels::reference::affine_forward(x.data(), w.data(), b.data(), m_in,
                                       m_out, y2.data());
  });
  const double tp = time_best_of(reps, [&] {
    kernels::affine_forward(x.data(), w.data(), b.data(), m_in, m_out,
                            y1.data());
  });
  char name[64];
  std::snprintf(name, sizeof name, "affine %zu -> %zu", m_in, m_out);
  report(name, ts, tp, y1 == y2);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("OpenMP enabled, max threads %d\n\n", omp_get_max_threads());
#else
  std::printf("built without OpenMP; both columns run serial code\n\n");
#endif

  // model #1 shapes on 50x20 inputs
  bench_conv(1, 50, 20, 16, 50);
  bench_conv_backward(1, 50, 20, 16, 50);
  bench_affine(3456, 100, 50);

  // deeper-stack shapes
  bench_conv(64, 46, 16, 128, 10);
  bench_conv_backward(64, 46, 16, 128, 10);
  bench_affine(9728, 300, 20);

  bench_matmul(256, 256, 256, 10);
  bench_matmul(64, 1024, 64, 20);
  return 0;
}
