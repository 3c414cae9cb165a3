#include "pigan/state_nodes.hpp"

#include <array>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "pigan/linalg.hpp"
#include "pigan/qstate.hpp"

namespace pigan::ad {

using linalg::ComplexMatrix;
using linalg::cplx;

namespace {

// sub-diagonal fill order shared by the Cholesky and LDL heads
constexpr std::array<std::pair<std::size_t, std::size_t>, 6> kLowerOrder = {
    {{1, 0}, {2, 0}, {2, 1}, {3, 0}, {3, 1}, {3, 2}}};

void check_channels(const Tensor& t, std::size_t width, const char* who) {
  if (t.shape.size() != 2 || t.shape[1] != width)
    throw std::invalid_argument(std::string(who) + ": expected shape (B," +
                                std::to_string(width) + ")");
}

ComplexMatrix hermitian_from_channels(const double* x) {
  ComplexMatrix m(4, 4);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) {
      const cplx v(x[re_ch(a, b)], x[im_ch(a, b)]);
      const cplx vt(x[re_ch(b, a)], x[im_ch(b, a)]);
      m(a, b) = 0.5 * (v + std::conj(vt));
    }
  return m;
}

// For real-valued f with Hermitian matrix gradient G, the channel gradient of
// f(herm(X)) is dRe_ab = Re(G_ab), dIm_ab = Im(G_ab).
void add_hermitian_grad(double* gx, const ComplexMatrix& g, double weight) {
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) {
      gx[re_ch(a, b)] += weight * g(a, b).real();
      gx[im_ch(a, b)] += weight * g(a, b).imag();
    }
}

void write_product_channels(const ComplexMatrix& m, double* out) {
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) {
      out[re_ch(a, b)] = m(a, b).real();
      out[im_ch(a, b)] = m(a, b).imag();
    }
}

ComplexMatrix upstream_matrix(const double* g) {
  ComplexMatrix p(4, 4);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b)
      p(a, b) = cplx(g[re_ch(a, b)], g[im_ch(a, b)]);
  return p;
}

}  // namespace

Tape::Id cholesky_assemble(Tape& tape, Tape::Id head) {
  const Tensor& h = tape.val(head);
  check_channels(h, 16, "cholesky_assemble");
  const std::size_t batch = h.shape[0];

  auto factors = std::make_shared<std::vector<ComplexMatrix>>();
  factors->reserve(batch);
  Tensor y = Tensor::zeros({batch, 32});
  for (std::size_t s = 0; s < batch; ++s) {
    const double* hv = h.values.data() + s * 16;
    ComplexMatrix l(4, 4);
    for (std::size_t k = 0; k < 4; ++k) l(k, k) = hv[k];
    for (std::size_t e = 0; e < 6; ++e)
      l(kLowerOrder[e].first, kLowerOrder[e].second) =
          cplx(hv[4 + 2 * e], hv[4 + 2 * e + 1]);
    write_product_channels(linalg::matmul(l, linalg::adjoint(l)),
                           y.values.data() + s * 32);
    factors->push_back(std::move(l));
  }

  return tape.custom(std::move(y), {head}, [head, batch, factors](Tape& t, Tape::Id self) {
    const auto& gy = t.grad_buf(self);
    auto& gh = t.grad_buf(head);
    for (std::size_t s = 0; s < batch; ++s) {
      const ComplexMatrix p = upstream_matrix(gy.data() + s * 32);
      // d/dL of Re Tr(P† d(LL†)) = (P + P†) L
      const ComplexMatrix gl =
          linalg::matmul(linalg::add(p, linalg::adjoint(p)), (*factors)[s]);
      double* g = gh.data() + s * 16;
      for (std::size_t k = 0; k < 4; ++k) g[k] += gl(k, k).real();
      for (std::size_t e = 0; e < 6; ++e) {
        g[4 + 2 * e] += gl(kLowerOrder[e].first, kLowerOrder[e].second).real();
        g[4 + 2 * e + 1] += gl(kLowerOrder[e].first, kLowerOrder[e].second).imag();
      }
    }
  });
}

Tape::Id ldl_assemble(Tape& tape, Tape::Id head, double eps) {
  const Tensor& h = tape.val(head);
  check_channels(h, 16, "ldl_assemble");
  const std::size_t batch = h.shape[0];

  struct Cache {
    ComplexMatrix l;
    std::array<double, 4> d;          // softplus(raw) + eps
    std::array<double, 4> sig;        // sigmoid(raw)
  };
  auto caches = std::make_shared<std::vector<Cache>>();
  caches->reserve(batch);

  Tensor y = Tensor::zeros({batch, 32});
  for (std::size_t s = 0; s < batch; ++s) {
    const double* hv = h.values.data() + s * 16;
    Cache c;
    c.l = ComplexMatrix::identity(4);
    for (std::size_t e = 0; e < 6; ++e)
      c.l(kLowerOrder[e].first, kLowerOrder[e].second) =
          cplx(hv[2 * e], hv[2 * e + 1]);
    for (std::size_t k = 0; k < 4; ++k) {
      const double raw = hv[12 + k];
      c.d[k] = std::max(raw, 0.0) + std::log1p(std::exp(-std::abs(raw))) + eps;
      c.sig[k] = raw >= 0.0 ? 1.0 / (1.0 + std::exp(-raw))
                            : std::exp(raw) / (1.0 + std::exp(raw));
    }
    ComplexMatrix ld = c.l;
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = 0; b < 4; ++b) ld(a, b) *= c.d[b];
    write_product_channels(linalg::matmul(ld, linalg::adjoint(c.l)),
                           y.values.data() + s * 32);
    caches->push_back(std::move(c));
  }

  return tape.custom(std::move(y), {head}, [head, batch, caches](Tape& t, Tape::Id self) {
    const auto& gy = t.grad_buf(self);
    auto& gh = t.grad_buf(head);
    for (std::size_t s = 0; s < batch; ++s) {
      const Cache& c = (*caches)[s];
      const ComplexMatrix p = upstream_matrix(gy.data() + s * 32);
      const ComplexMatrix psym = linalg::add(p, linalg::adjoint(p));
      ComplexMatrix ld = c.l;
      for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b) ld(a, b) *= c.d[b];
      // d/dL of Re Tr(P† d(LDL†)) = (P + P†) L D; diagonal of L is fixed
      const ComplexMatrix gl = linalg::matmul(psym, ld);
      // d/dD_k = Re((L† P L)_kk); P enters via Re Tr(P† L dD L†)
      const ComplexMatrix lpl =
          linalg::matmul(linalg::adjoint(c.l), linalg::matmul(p, c.l));
      double* g = gh.data() + s * 16;
      for (std::size_t e = 0; e < 6; ++e) {
        g[2 * e] += gl(kLowerOrder[e].first, kLowerOrder[e].second).real();
        g[2 * e + 1] += gl(kLowerOrder[e].first, kLowerOrder[e].second).imag();
      }
      for (std::size_t k = 0; k < 4; ++k)
        g[12 + k] += lpl(k, k).real() * c.sig[k];
    }
  });
}

Tape::Id direct_hermitize(Tape& tape, Tape::Id raw) {
  const Tensor& x = tape.val(raw);
  check_channels(x, 32, "direct_hermitize");
  const std::size_t batch = x.shape[0];
  Tensor y = Tensor::zeros({batch, 32});
  for (std::size_t s = 0; s < batch; ++s) {
    const double* xv = x.values.data() + s * 32;
    double* yv = y.values.data() + s * 32;
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = 0; b < 4; ++b) {
        yv[re_ch(a, b)] = 0.5 * (xv[re_ch(a, b)] + xv[re_ch(b, a)]);
        yv[im_ch(a, b)] = 0.5 * (xv[im_ch(a, b)] - xv[im_ch(b, a)]);
      }
  }
  return tape.custom(std::move(y), {raw}, [raw, batch](Tape& t, Tape::Id self) {
    const auto& gy = t.grad_buf(self);
    auto& gx = t.grad_buf(raw);
    for (std::size_t s = 0; s < batch; ++s) {
      const double* g = gy.data() + s * 32;
      double* out = gx.data() + s * 32;
      for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b) {
          out[re_ch(a, b)] += 0.5 * (g[re_ch(a, b)] + g[re_ch(b, a)]);
          out[im_ch(a, b)] += 0.5 * (g[im_ch(a, b)] - g[im_ch(b, a)]);
        }
    }
  });
}

Tape::Id trace_normalize(Tape& tape, Tape::Id rho) {
  const Tensor& x = tape.val(rho);
  check_channels(x, 32, "trace_normalize");
  const std::size_t batch = x.shape[0];

  auto traces = std::make_shared<std::vector<double>>(batch);
  Tensor y = Tensor::zeros({batch, 32});
  for (std::size_t s = 0; s < batch; ++s) {
    const double* xv = x.values.data() + s * 32;
    double* yv = y.values.data() + s * 32;
    double tr = 0.0;
    for (std::size_t k = 0; k < 4; ++k) tr += xv[re_ch(k, k)];
    const bool guard = tr < 1e-12;
    const double t = guard ? tr + 4e-12 : tr;
    (*traces)[s] = t;
    for (std::size_t i = 0; i < 32; ++i) yv[i] = xv[i] / t;
    if (guard)
      for (std::size_t k = 0; k < 4; ++k) yv[re_ch(k, k)] += 1e-12 / t;
  }
  return tape.custom(std::move(y), {rho}, [rho, batch, traces](Tape& t, Tape::Id self) {
    const auto& gy = t.grad_buf(self);
    const auto& yv = t.val(self).values;
    auto& gx = t.grad_buf(rho);
    for (std::size_t s = 0; s < batch; ++s) {
      const double* g = gy.data() + s * 32;
      const double* y = yv.data() + s * 32;
      double* out = gx.data() + s * 32;
      const double tr = (*traces)[s];
      double dot = 0.0;
      for (std::size_t i = 0; i < 32; ++i) dot += g[i] * y[i];
      for (std::size_t i = 0; i < 32; ++i) out[i] += g[i] / tr;
      for (std::size_t k = 0; k < 4; ++k) out[re_ch(k, k)] -= dot / tr;
    }
  });
}

Tape::Id psd_penalty(Tape& tape, Tape::Id rho) {
  const Tensor& x = tape.val(rho);
  check_channels(x, 32, "psd_penalty");
  const std::size_t batch = x.shape[0];

  auto eigs = std::make_shared<std::vector<linalg::HermitianEig>>();
  eigs->reserve(batch);
  Tensor y = Tensor::zeros({batch});
  for (std::size_t s = 0; s < batch; ++s) {
    linalg::HermitianEig e =
        linalg::hermitian_eig(hermitian_from_channels(x.values.data() + s * 32));
    double v = 0.0;
    for (double lam : e.eigenvalues) {
      tape.note_kink(std::abs(lam));
      if (lam < 0.0) v -= lam;
    }
    y.values[s] = v;
    eigs->push_back(std::move(e));
  }
  return tape.custom(std::move(y), {rho}, [rho, batch, eigs](Tape& t, Tape::Id self) {
    const auto& gy = t.grad_buf(self);
    auto& gx = t.grad_buf(rho);
    for (std::size_t s = 0; s < batch; ++s) {
      if (gy[s] == 0.0) continue;
      const auto& e = (*eigs)[s];
      // jitter near-degenerate values before the active-set test
      std::array<double, 4> lam;
      for (int k = 0; k < 4; ++k) lam[k] = e.eigenvalues[k];
      for (int k = 1; k < 4; ++k)
        if (lam[k] - lam[k - 1] < 1e-12) lam[k] = lam[k - 1] + 1e-12;
      ComplexMatrix w(4, 4);
      for (int k = 0; k < 4; ++k) {
        if (lam[k] >= 0.0) continue;
        for (std::size_t a = 0; a < 4; ++a)
          for (std::size_t b = 0; b < 4; ++b)
            w(a, b) -= e.eigenvectors(a, k) * std::conj(e.eigenvectors(b, k));
      }
      add_hermitian_grad(gx.data() + s * 32, w, gy[s]);
    }
  });
}

Tape::Id trace_penalty(Tape& tape, Tape::Id rho) {
  const Tensor& x = tape.val(rho);
  check_channels(x, 32, "trace_penalty");
  const std::size_t batch = x.shape[0];
  auto signs = std::make_shared<std::vector<double>>(batch);
  Tensor y = Tensor::zeros({batch});
  for (std::size_t s = 0; s < batch; ++s) {
    const double* xv = x.values.data() + s * 32;
    double tr = 0.0;
    for (std::size_t k = 0; k < 4; ++k) tr += xv[re_ch(k, k)];
    tape.note_kink(std::abs(tr - 1.0));
    y.values[s] = std::abs(tr - 1.0);
    (*signs)[s] = tr > 1.0 ? 1.0 : (tr < 1.0 ? -1.0 : 0.0);
  }
  return tape.custom(std::move(y), {rho}, [rho, batch, signs](Tape& t, Tape::Id self) {
    const auto& gy = t.grad_buf(self);
    auto& gx = t.grad_buf(rho);
    for (std::size_t s = 0; s < batch; ++s) {
      const double g = gy[s] * (*signs)[s];
      for (std::size_t k = 0; k < 4; ++k) gx[s * 32 + re_ch(k, k)] += g;
    }
  });
}

Tape::Id herm_penalty(Tape& tape, Tape::Id raw) {
  const Tensor& x = tape.val(raw);
  check_channels(x, 32, "herm_penalty");
  const std::size_t batch = x.shape[0];
  Tensor y = Tensor::zeros({batch});
  for (std::size_t s = 0; s < batch; ++s) {
    const double* xv = x.values.data() + s * 32;
    double v = 0.0;
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = 0; b < 4; ++b) {
        const double dr = xv[re_ch(a, b)] - xv[re_ch(b, a)];
        const double di = xv[im_ch(a, b)] + xv[im_ch(b, a)];
        const double mag = std::hypot(dr, di);
        tape.note_kink(mag);
        v += mag;
      }
    y.values[s] = 0.5 * v;
  }
  return tape.custom(std::move(y), {raw}, [raw, batch](Tape& t, Tape::Id self) {
    const auto& gy = t.grad_buf(self);
    const auto& xv = t.val(raw).values;
    auto& gx = t.grad_buf(raw);
    for (std::size_t s = 0; s < batch; ++s) {
      if (gy[s] == 0.0) continue;
      const double* x = xv.data() + s * 32;
      double* out = gx.data() + s * 32;
      for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b) {
          const double dr = x[re_ch(a, b)] - x[re_ch(b, a)];
          const double di = x[im_ch(a, b)] + x[im_ch(b, a)];
          const double mag = std::hypot(dr, di);
          if (mag < 1e-300) continue;
          out[re_ch(a, b)] += gy[s] * dr / mag;
          out[im_ch(a, b)] += gy[s] * di / mag;
        }
    }
  });
}

namespace {

// phi_k(X) = Re Tr(herm(X) P_k) = Re Tr(X P_k): linear in the channels with
// coefficients Re(P_k(b,a)) and -Im(P_k(b,a)).
struct PauliCoeffs {
  // [k][channel]
  std::array<std::array<double, 32>, 16> coeff{};
  PauliCoeffs() {
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        const ComplexMatrix& p = qstate::pauli_pair(i, j);
        auto& row = coeff[4 * i + j];
        for (std::size_t a = 0; a < 4; ++a)
          for (std::size_t b = 0; b < 4; ++b) {
            row[re_ch(a, b)] = p(b, a).real();
            row[im_ch(a, b)] = -p(b, a).imag();
          }
      }
  }
};

const PauliCoeffs& pauli_coeffs() {
  static const PauliCoeffs c;
  return c;
}

double channel_dot(const double* x, const std::array<double, 32>& coeff) {
  double s = 0.0;
  for (std::size_t i = 0; i < 32; ++i) s += x[i] * coeff[i];
  return s;
}

}  // namespace

Tape::Id pauli_embed(Tape& tape, Tape::Id rho) {
  const Tensor& x = tape.val(rho);
  check_channels(x, 32, "pauli_embed");
  const std::size_t batch = x.shape[0];
  const PauliCoeffs& pc = pauli_coeffs();
  Tensor y = Tensor::zeros({batch, 16});
  for (std::size_t s = 0; s < batch; ++s)
    for (std::size_t k = 0; k < 16; ++k)
      y.values[s * 16 + k] = channel_dot(x.values.data() + s * 32, pc.coeff[k]);
  return tape.custom(std::move(y), {rho}, [rho, batch](Tape& t, Tape::Id self) {
    const PauliCoeffs& pc = pauli_coeffs();
    const auto& gy = t.grad_buf(self);
    auto& gx = t.grad_buf(rho);
    for (std::size_t s = 0; s < batch; ++s)
      for (std::size_t k = 0; k < 16; ++k) {
        const double g = gy[s * 16 + k];
        if (g == 0.0) continue;
        double* out = gx.data() + s * 32;
        for (std::size_t i = 0; i < 32; ++i) out[i] += g * pc.coeff[k][i];
      }
  });
}

Tape::Id teleport_hinge(Tape& tape, Tape::Id rho) {
  const Tensor& x = tape.val(rho);
  check_channels(x, 32, "teleport_hinge");
  const std::size_t batch = x.shape[0];
  const PauliCoeffs& pc = pauli_coeffs();

  struct Cache {
    bool active;
    std::array<double, 9> dn_dt;  // row-major dN/dT
  };
  auto caches = std::make_shared<std::vector<Cache>>(batch);

  Tensor y = Tensor::zeros({batch});
  for (std::size_t s = 0; s < batch; ++s) {
    const double* xv = x.values.data() + s * 32;
    double tmat[9];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        tmat[3 * i + j] = channel_dot(xv, pc.coeff[4 * (i + 1) + (j + 1)]);

    ComplexMatrix tt(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double v = 0.0;
        for (int k = 0; k < 3; ++k) v += tmat[3 * k + i] * tmat[3 * k + j];
        tt(i, j) = v;
      }
    const linalg::HermitianEig e = linalg::hermitian_eig(tt);
    double n = 0.0;
    std::array<double, 3> sv;
    for (int k = 0; k < 3; ++k) {
      sv[k] = std::sqrt(std::max(0.0, e.eigenvalues[k]));
      tape.note_kink(sv[k]);
      n += sv[k];
    }
    const double f_max = 0.5 * (1.0 + n / 3.0);
    tape.note_kink(std::abs(2.0 / 3.0 - f_max));
    y.values[s] = std::max(0.0, 2.0 / 3.0 - f_max);

    Cache& c = (*caches)[s];
    c.active = y.values[s] > 0.0;
    if (c.active) {
      // dN/dT = T V diag(1/sigma) V^T, skipping near-zero singular values
      double w[9] = {0};
      for (int k = 0; k < 3; ++k) {
        if (sv[k] < 1e-9) continue;
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            w[3 * i + j] +=
                e.eigenvectors(i, k).real() * e.eigenvectors(j, k).real() / sv[k];
      }
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          double v = 0.0;
          for (int k = 0; k < 3; ++k) v += tmat[3 * i + k] * w[3 * k + j];
          c.dn_dt[3 * i + j] = v;
        }
    }
  }

  return tape.custom(std::move(y), {rho}, [rho, batch, caches](Tape& t, Tape::Id self) {
    const PauliCoeffs& pc = pauli_coeffs();
    const auto& gy = t.grad_buf(self);
    auto& gx = t.grad_buf(rho);
    for (std::size_t s = 0; s < batch; ++s) {
      const Cache& c = (*caches)[s];
      if (gy[s] == 0.0 || !c.active) continue;
      // d hinge/dN = -1/6
      const double g = gy[s] * (-1.0 / 6.0);
      double* out = gx.data() + s * 32;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          const double gt = g * c.dn_dt[3 * i + j];
          if (gt == 0.0) continue;
          const auto& coeff = pc.coeff[4 * (i + 1) + (j + 1)];
          for (std::size_t ch = 0; ch < 32; ++ch) out[ch] += gt * coeff[ch];
        }
    }
  });
}

Tape::Id bell_broadcast_hinge(Tape& tape, Tape::Id rho, double threshold) {
  const Tensor& x = tape.val(rho);
  check_channels(x, 32, "bell_broadcast_hinge");
  const std::size_t batch = x.shape[0];
  const PauliCoeffs& pc = pauli_coeffs();

  static constexpr std::array<std::array<double, 3>, 4> kSigns = {{
      {1, -1, 1}, {-1, 1, 1}, {1, 1, -1}, {-1, -1, -1}}};

  auto best_signs = std::make_shared<std::vector<int>>(batch);
  Tensor y = Tensor::zeros({batch});
  for (std::size_t s = 0; s < batch; ++s) {
    const double* xv = x.values.data() + s * 32;
    std::array<double, 3> c;
    for (int i = 0; i < 3; ++i)
      c[i] = channel_dot(xv, pc.coeff[4 * (i + 1) + (i + 1)]);
    double best = -1e300, second = -1e300;
    int best_idx = 0;
    for (int v = 0; v < 4; ++v) {
      const double sum = kSigns[v][0] * c[0] + kSigns[v][1] * c[1] + kSigns[v][2] * c[2];
      if (sum > best) {
        second = best;
        best = sum;
        best_idx = v;
      } else if (sum > second) {
        second = sum;
      }
    }
    tape.note_kink(best - second);
    tape.note_kink(std::abs(threshold - best));
    y.values[s] = std::max(0.0, threshold - best) / threshold;
    (*best_signs)[s] = best_idx;
  }
  return tape.custom(std::move(y), {rho},
                     [rho, batch, best_signs, threshold](Tape& t, Tape::Id self) {
    const PauliCoeffs& pc = pauli_coeffs();
    const auto& gy = t.grad_buf(self);
    const auto& yv = t.val(self).values;
    auto& gx = t.grad_buf(rho);
    for (std::size_t s = 0; s < batch; ++s) {
      if (gy[s] == 0.0 || yv[s] == 0.0) continue;
      const auto& sign = kSigns[(*best_signs)[s]];
      double* out = gx.data() + s * 32;
      for (int i = 0; i < 3; ++i) {
        const double g = -gy[s] * sign[i] / threshold;
        const auto& coeff = pc.coeff[4 * (i + 1) + (i + 1)];
        for (std::size_t ch = 0; ch < 32; ++ch) out[ch] += g * coeff[ch];
      }
    }
  });
}

Tape::Id werner_broadcast_hinge(Tape& tape, Tape::Id rho, double threshold) {
  const Tensor& x = tape.val(rho);
  check_channels(x, 32, "werner_broadcast_hinge");
  const std::size_t batch = x.shape[0];

  struct Cache {
    bool active;
    ComplexMatrix grad;  // d lambda_min / d rho, already back-permuted
  };
  auto caches = std::make_shared<std::vector<Cache>>(batch);

  Tensor y = Tensor::zeros({batch});
  for (std::size_t s = 0; s < batch; ++s) {
    const ComplexMatrix m = hermitian_from_channels(x.values.data() + s * 32);
    ComplexMatrix pt(4, 4);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 2; ++b)
            pt(2 * i + a, 2 * j + b) = m(2 * i + b, 2 * j + a);
    const linalg::HermitianEig e = linalg::hermitian_eig(pt);
    const double lam_min = e.eigenvalues[0];
    tape.note_kink(e.eigenvalues[1] - e.eigenvalues[0]);
    const double stat = -lam_min;
    tape.note_kink(std::abs(threshold - stat));
    y.values[s] = std::max(0.0, threshold - stat) / threshold;

    Cache& c = (*caches)[s];
    c.active = y.values[s] > 0.0;
    if (c.active) {
      // d lambda_min/d(PT rho) = v v†, pulled back through the (self-adjoint)
      // partial transpose
      ComplexMatrix vv(4, 4);
      for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b)
          vv(a, b) = e.eigenvectors(a, 0) * std::conj(e.eigenvectors(b, 0));
      c.grad = ComplexMatrix(4, 4);
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
          for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b)
              c.grad(2 * i + a, 2 * j + b) = vv(2 * i + b, 2 * j + a);
    }
  }
  return tape.custom(std::move(y), {rho},
                     [rho, batch, caches, threshold](Tape& t, Tape::Id self) {
    const auto& gy = t.grad_buf(self);
    auto& gx = t.grad_buf(rho);
    for (std::size_t s = 0; s < batch; ++s) {
      const Cache& c = (*caches)[s];
      if (gy[s] == 0.0 || !c.active) continue;
      // hinge = (thr + lambda_min)/thr while active
      add_hermitian_grad(gx.data() + s * 32, c.grad, gy[s] / threshold);
    }
  });
}

Tape::Id diversity_loss(Tape& tape, Tape::Id embeddings, double margin) {
  const Tensor& e = tape.val(embeddings);
  check_channels(e, 16, "diversity_loss");
  const std::size_t batch = e.shape[0];
  if (batch < 2)
    throw std::invalid_argument("diversity_loss: at least two samples required");
  const std::size_t n_pairs = batch * (batch - 1) / 2;

  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = i + 1; j < batch; ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < 16; ++k) {
        const double diff = e.values[i * 16 + k] - e.values[j * 16 + k];
        d2 += diff * diff;
      }
      const double d = std::sqrt(d2);
      tape.note_kink(d);
      tape.note_kink(std::abs(margin - d));
      total += std::max(0.0, margin - d);
    }
  Tensor y = Tensor::zeros({1});
  y.values[0] = total / static_cast<double>(n_pairs);

  return tape.custom(std::move(y), {embeddings},
                     [embeddings, batch, n_pairs, margin](Tape& t, Tape::Id self) {
    const double g = t.grad_buf(self)[0] / static_cast<double>(n_pairs);
    if (g == 0.0) return;
    const auto& ev = t.val(embeddings).values;
    auto& gx = t.grad_buf(embeddings);
    for (std::size_t i = 0; i < batch; ++i)
      for (std::size_t j = i + 1; j < batch; ++j) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < 16; ++k) {
          const double diff = ev[i * 16 + k] - ev[j * 16 + k];
          d2 += diff * diff;
        }
        const double d = std::sqrt(d2);
        if (d >= margin || d < 1e-12) continue;
        for (std::size_t k = 0; k < 16; ++k) {
          const double diff = ev[i * 16 + k] - ev[j * 16 + k];
          gx[i * 16 + k] -= g * diff / d;
          gx[j * 16 + k] += g * diff / d;
        }
      }
  });
}

}  // namespace pigan::ad
