#pragma once

#include <cstddef>
#include <cstdint>

// OpenMP-parallel inner loops. Every parallel loop assigns each output cell
// (or each accumulator) to exactly one thread and keeps a fixed per-cell
// summation order, so results are bit-identical for any thread count and
// match the serial reference kernels exactly.
namespace gfcnn::kernels {

// Below this many scalar multiply-adds a loop stays serial.
inline constexpr std::size_t parallel_cutoff = std::size_t(1) << 14;

// y[co][r][c] = bias[co] + sum_{ci,u,v} k[co][ci][u][v] * x[ci][r+u][c+v]
// Valid cross-correlation, stride 1.
template <class T>
void conv2d_forward(const T* x, std::size_t cin, std::size_t h, std::size_t w,
                    const T* k, const T* bias, std::size_t cout,
                    std::size_t kh, std::size_t kw, T* y) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  const std::size_t work = cout * oh * ow * cin * kh * kw;
#pragma omp parallel for collapse(2) schedule(static) if (work > parallel_cutoff)
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t r = 0; r < oh; ++r) {
      T* yrow = y + (co * oh + r) * ow;
      for (std::size_t c = 0; c < ow; ++c) {
        T acc = bias ? bias[co] : T(0);
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const T* xin = x + ci * h * w;
          const T* kk = k + (co * cin + ci) * kh * kw;
          for (std::size_t u = 0; u < kh; ++u) {
            const T* xrow = xin + (r + u) * w + c;
            const T* krow = kk + u * kw;
            for (std::size_t v = 0; v < kw; ++v) acc += krow[v] * xrow[v];
          }
        }
        yrow[c] = acc;
      }
    }
}

// gx[ci][ih][iw] += sum_{co,u,v} k[co][ci][u][v] * gy[co][ih-u][iw-v]
template <class T>
void conv2d_backward_input(const T* gy, const T* k,
                           std::size_t cin, std::size_t h, std::size_t w,
                           std::size_t cout, std::size_t kh, std::size_t kw,
                           T* gx) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  const std::size_t work = cin * h * w * cout * kh;
#pragma omp parallel for collapse(2) schedule(static) if (work > parallel_cutoff)
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t ih = 0; ih < h; ++ih) {
      T* gxrow = gx + (ci * h + ih) * w;
      for (std::size_t iw = 0; iw < w; ++iw) {
        T acc = 0;
        for (std::size_t co = 0; co < cout; ++co) {
          const T* gyc = gy + co * oh * ow;
          const T* kk = k + (co * cin + ci) * kh * kw;
          for (std::size_t u = 0; u < kh; ++u) {
            if (ih < u) continue;
            const std::size_t r = ih - u;
            if (r >= oh) continue;
            for (std::size_t v = 0; v < kw; ++v) {
              if (iw < v) continue;
              const std::size_t c = iw - v;
              if (c >= ow) continue;
              acc += kk[u * kw + v] * gyc[r * ow + c];
            }
          }
        }
        gxrow[iw] += acc;
      }
    }
}

// gk[co][ci][u][v] += sum_{r,c} gy[co][r][c] * x[ci][r+u][c+v]
// gb[co]           += sum_{r,c} gy[co][r][c]
template <class T>
void conv2d_backward_params(const T* x, const T* gy,
                            std::size_t cin, std::size_t h, std::size_t w,
                            std::size_t cout, std::size_t kh, std::size_t kw,
                            T* gk, T* gb) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  const std::size_t nk = cout * cin * kh * kw;
  const std::size_t work = nk * oh * ow;
#pragma omp parallel for schedule(static) if (work > parallel_cutoff)
  for (std::size_t idx = 0; idx < nk; ++idx) {
    const std::size_t v = idx % kw;
    const std::size_t u = (idx / kw) % kh;
    const std::size_t ci = (idx / (kw * kh)) % cin;
    const std::size_t co = idx / (kw * kh * cin);
    const T* gyc = gy + co * oh * ow;
    const T* xin = x + ci * h * w;
    T acc = 0;
    for (std::size_t r = 0; r < oh; ++r) {
      const T* xrow = xin + (r + u) * w + v;
      const T* grow = gyc + r * ow;
      for (std::size_t c = 0; c < ow; ++c) acc += grow[c] * xrow[c];
    }
    gk[idx] += acc;
  }
  if (gb) {
    for (std::size_t co = 0; co < cout; ++co) {
      const T* gyc = gy + co * oh * ow;
      T acc = 0;
      for (std::size_t i = 0; i < oh * ow; ++i) acc += gyc[i];
      gb[co] += acc;
    }
  }
}

// c = a(m x k) * b(k x n); each output row owned by one thread, per-element
// sums run over l ascending.
template <class T>
void matmul(const T* a, const T* b, T* c,
            std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t work = m * n * k;
#pragma omp parallel for schedule(static) if (work > parallel_cutoff)
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
    const T* arow = a + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      const T al = arow[l];
      const T* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += al * brow[j];
    }
  }
}

// y[j] = bias[j] + dot(w[j], x); w stored output-major (m_out x m_in)
template <class T>
void affine_forward(const T* x, const T* w, const T* bias,
                    std::size_t m_in, std::size_t m_out, T* y) {
  const std::size_t work = m_in * m_out;
#pragma omp parallel for schedule(static) if (work > parallel_cutoff)
  for (std::size_t j = 0; j < m_out; ++j) {
    const T* wrow = w + j * m_in;
    T acc = bias ? bias[j] : T(0);
    for (std::size_t i = 0; i < m_in; ++i) acc += wrow[i] * x[i];
    y[j] = acc;
  }
}

// gw[j][i] += gy[j] x[i]; gb[j] += gy[j]; gx[i] += sum_j gy[j] w[j][i].
// gx runs serial over j so its accumulation order never depends on threads.
template <class T>
void affine_backward(const T* x, const T* w, const T* gy,
                     std::size_t m_in, std::size_t m_out,
                     T* gx, T* gw, T* gb) {
  const std::size_t work = m_in * m_out;
  if (gw || gb) {
#pragma omp parallel for schedule(static) if (work > parallel_cutoff)
    for (std::size_t j = 0; j < m_out; ++j) {
      const T g = gy[j];
      if (gw) {
        T* gwrow = gw + j * m_in;
        for (std::size_t i = 0; i < m_in; ++i) gwrow[i] += g * x[i];
      }
      if (gb) gb[j] += g;
    }
  }
  if (gx) {
    for (std::size_t j = 0; j < m_out; ++j) {
      const T g = gy[j];
      const T* wrow = w + j * m_in;
      for (std::size_t i = 0; i < m_in; ++i) gx[i] += g * wrow[i];
    }
  }
}

// Non-overlapping max pooling with floor semantics; trailing rows/cols that
// do not fill a window are dropped. argmax holds the within-plane flat index
// of the first maximal element in row-major scan order.
template <class T>
void maxpool_forward(const T* x, std::size_t ch, std::size_t h, std::size_t w,
                     std::size_t pr, std::size_t pc, T* y, std::uint32_t* argmax) {
  const std::size_t oh = h / pr, ow = w / pc;
  const std::size_t work = ch * oh * ow * pr * pc;
#pragma omp parallel for schedule(static) if (work > parallel_cutoff)
  for (std::size_t c = 0; c < ch; ++c) {
    const T* xin = x + c * h * w;
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t q = 0; q < ow; ++q) {
        const std::size_t base = (r * pr) * w + q * pc;
        T best = xin[base];
        std::size_t besti = base;
        for (std::size_t u = 0; u < pr; ++u)
          for (std::size_t v = 0; v < pc; ++v) {
            const std::size_t idx = base + u * w + v;
            if (xin[idx] > best) {
              best = xin[idx];
              besti = idx;
            }
          }
        const std::size_t o = (c * oh + r) * ow + q;
        y[o] = best;
        if (argmax) argmax[o] = static_cast<std::uint32_t>(besti);
      }
  }
}

template <class T>
void maxpool_backward(const T* gy, const std::uint32_t* argmax,
                      std::size_t ch, std::size_t h, std::size_t w,
                      std::size_t pr, std::size_t pc, T* gx) {
  const std::size_t oh = h / pr, ow = w / pc;
#pragma omp parallel for schedule(static) if (ch * oh * ow > parallel_cutoff)
  for (std::size_t c = 0; c < ch; ++c) {
    T* gxc = gx + c * h * w;
    const T* gyc = gy + c * oh * ow;
    const std::uint32_t* am = argmax + c * oh * ow;
    for (std::size_t i = 0; i < oh * ow; ++i) gxc[am[i]] += gyc[i];
  }
}

}  // namespace gfcnn::kernels
