#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "gfcnn/kernels.hpp"
#include "gfcnn/kernels_ref.hpp"
#include "gfcnn/rng.hpp"

// The OpenMP kernels must be bit-identical to the serial reference: each
// output cell sums in the same order in both, threads only partition the
// cells. Sizes are chosen to exceed the parallel cutoff so the parallel
// paths actually engage.

using namespace gfcnn;

namespace {

std::vector<double> rand_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return v;
}

}  // namespace

TEST_CASE("conv2d forward: parallel == serial, bitwise") {
  Rng rng(101);
  for (auto [cin, h, w, cout] : {std::array<std::size_t, 4>{1, 50, 20, 16},
                                 {4, 40, 40, 8},
                                 {3, 7, 9, 5}}) {
    const std::size_t oh = h - 2, ow = w - 2;
    auto x = rand_vec(cin * h * w, rng);
    auto k = rand_vec(cout * cin * 9, rng);
    auto b = rand_vec(cout, rng);
    std::vector<double> y1(cout * oh * ow), y2(cout * oh * ow);
    kernels::conv2d_forward(x.data(), cin, h, w, k.data(), b.data(), cout, 3, 3,
                            y1.data());
    kernels::reference::conv2d_forward(x.data(), cin, h, w, k.data(), b.data(),
                                       cout, 3, 3, y2.data());
    CHECK(y1 == y2);
  }
}

TEST_CASE("conv2d backward: parallel == serial, bitwise") {
  Rng rng(102);
  const std::size_t cin = 4, h = 30, w = 26, cout = 8;
  const std::size_t oh = h - 2, ow = w - 2;
  auto x = rand_vec(cin * h * w, rng);
  auto k = rand_vec(cout * cin * 9, rng);
  auto gy = rand_vec(cout * oh * ow, rng);

  std::vector<double> gx1(cin * h * w, 0.5), gx2(cin * h * w, 0.5);
  kernels::conv2d_backward_input(gy.data(), k.data(), cin, h, w, cout, 3, 3,
                                 gx1.data());
  kernels::reference::conv2d_backward_input(gy.data(), k.data(), cin, h, w,
                                            cout, 3, 3, gx2.data());
  CHECK(gx1 == gx2);

  std::vector<double> gk1(cout * cin * 9, 0.25), gk2(cout * cin * 9, 0.25);
  std::vector<double> gb1(cout, 0.0), gb2(cout, 0.0);
  kernels::conv2d_backward_params(x.data(), gy.data(), cin, h, w, cout, 3, 3,
                                  gk1.data(), gb1.data());
  kernels::reference::conv2d_backward_params(x.data(), gy.data(), cin, h, w,
                                             cout, 3, 3, gk2.data(), gb2.data());
  CHECK(gk1 == gk2);
  CHECK(gb1 == gb2);
}

TEST_CASE("matmul: parallel == serial, bitwise") {
  Rng rng(103);
  for (auto [m, k, n] : {std::array<std::size_t, 3>{64, 80, 96},
                         {5, 7, 3},
                         {1, 128, 200}}) {
    auto a = rand_vec(m * k, rng);
    auto b = rand_vec(k * n, rng);
    std::vector<double> c1(m * n), c2(m * n);
    kernels::matmul(a.data(), b.data(), c1.data(), m, k, n);
    kernels::reference::matmul(a.data(), b.data(), c2.data(), m, k, n);
    CHECK(c1 == c2);
  }
}

TEST_CASE("affine: parallel == serial, bitwise") {
  Rng rng(104);
  const std::size_t m_in = 3456, m_out = 100;
  auto x = rand_vec(m_in, rng);
  auto w = rand_vec(m_in * m_out, rng);
  auto b = rand_vec(m_out, rng);
  std::vector<double> y1(m_out), y2(m_out);
  kernels::affine_forward(x.data(), w.data(), b.data(), m_in, m_out, y1.data());
  kernels::reference::affine_forward(x.data(), w.data(), b.data(), m_in, m_out,
                                     y2.data());
  CHECK(y1 == y2);
}

TEST_CASE("maxpool: parallel == serial, argmax included") {
  Rng rng(105);
  const std::size_t ch = 16, h = 48, w = 18;
  auto x = rand_vec(ch * h * w, rng);
  std::vector<double> y1(ch * 24 * 9), y2(ch * 24 * 9);
  std::vector<std::uint32_t> a1(y1.size()), a2(y2.size());
  kernels::maxpool_forward(x.data(), ch, h, w, 2, 2, y1.data(), a1.data());
  kernels::reference::maxpool_forward(x.data(), ch, h, w, 2, 2, y2.data(),
                                      a2.data());
  CHECK(y1 == y2);
  CHECK(a1 == a2);
}

TEST_CASE("maxpool argmax picks the first maximum in row-major order") {
  // 2x2 window of identical values: first cell (row-major) must win
  std::vector<double> x = {7, 7, 7, 7};
  std::vector<double> y(1);
  std::vector<std::uint32_t> am(1);
  kernels::maxpool_forward(x.data(), 1, 2, 2, 2, 2, y.data(), am.data());
  CHECK(y[0] == 7);
  CHECK(am[0] == 0);
}
