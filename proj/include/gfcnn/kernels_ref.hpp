#pragma once

#include <cstddef>
#include <cstdint>

// Naive single-threaded reference kernels: the obvious loop nests, no
// threading, no restructuring. Tests assert the OpenMP kernels match these
// bit for bit, and the layer tests use them as the slow oracle. Kept out of
// the hot path on purpose.
namespace gfcnn::kernels::reference {

template <class T>
void conv2d_forward(const T* x, std::size_t cin, std::size_t h, std::size_t w,
                    const T* k, const T* bias, std::size_t cout,
                    std::size_t kh, std::size_t kw, T* y) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c) {
        T acc = bias ? bias[co] : T(0);
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t u = 0; u < kh; ++u)
            for (std::size_t v = 0; v < kw; ++v)
              acc += k[((co * cin + ci) * kh + u) * kw + v] *
                     x[(ci * h + r + u) * w + c + v];
        y[(co * oh + r) * ow + c] = acc;
      }
}

template <class T>
void conv2d_backward_input(const T* gy, const T* k,
                           std::size_t cin, std::size_t h, std::size_t w,
                           std::size_t cout, std::size_t kh, std::size_t kw,
                           T* gx) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t ih = 0; ih < h; ++ih)
      for (std::size_t iw = 0; iw < w; ++iw) {
        T acc = 0;
        for (std::size_t co = 0; co < cout; ++co)
          for (std::size_t u = 0; u < kh; ++u) {
            if (ih < u || ih - u >= oh) continue;
            for (std::size_t v = 0; v < kw; ++v) {
              if (iw < v || iw - v >= ow) continue;
              acc += k[((co * cin + ci) * kh + u) * kw + v] *
                     gy[(co * oh + ih - u) * ow + iw - v];
            }
          }
        gx[(ci * h + ih) * w + iw] += acc;
      }
}

template <class T>
void conv2d_backward_params(const T* x, const T* gy,
                            std::size_t cin, std::size_t h, std::size_t w,
                            std::size_t cout, std::size_t kh, std::size_t kw,
                            T* gk, T* gb) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t u = 0; u < kh; ++u)
        for (std::size_t v = 0; v < kw; ++v) {
          T acc = 0;
          for (std::size_t r = 0; r < oh; ++r)
            for (std::size_t c = 0; c < ow; ++c)
              acc += gy[(co * oh + r) * ow + c] * x[(ci * h + r + u) * w + c + v];
          gk[((co * cin + ci) * kh + u) * kw + v] += acc;
        }
  if (gb)
    for (std::size_t co = 0; co < cout; ++co) {
      T acc = 0;
      for (std::size_t i = 0; i < oh * ow; ++i) acc += gy[co * oh * ow + i];
      gb[co] += acc;
    }
}

template <class T>
void matmul(const T* a, const T* b, T* c,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t l = 0; l < k; ++l) acc += a[i * k + l] * b[l * n + j];
      c[i * n + j] = acc;
    }
}

template <class T>
void affine_forward(const T* x, const T* w, const T* bias,
                    std::size_t m_in, std::size_t m_out, T* y) {
  for (std::size_t j = 0; j < m_out; ++j) {
    T acc = bias ? bias[j] : T(0);
    for (std::size_t i = 0; i < m_in; ++i) acc += w[j * m_in + i] * x[i];
    y[j] = acc;
  }
}

template <class T>
void maxpool_forward(const T* x, std::size_t ch, std::size_t h, std::size_t w,
                     std::size_t pr, std::size_t pc, T* y, std::uint32_t* argmax) {
  const std::size_t oh = h / pr, ow = w / pc;
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t q = 0; q < ow; ++q) {
        T best = x[c * h * w + r * pr * w + q * pc];
        std::size_t besti = r * pr * w + q * pc;
        for (std::size_t u = 0; u < pr; ++u)
          for (std::size_t v = 0; v < pc; ++v) {
            const std::size_t idx = (r * pr + u) * w + q * pc + v;
            if (x[c * h * w + idx] > best) {
              best = x[c * h * w + idx];
              besti = idx;
            }
          }
        y[(c * oh + r) * ow + q] = best;
        if (argmax) argmax[(c * oh + r) * ow + q] = static_cast<std::uint32_t>(besti);
      }
}

}  // namespace gfcnn::kernels::reference
