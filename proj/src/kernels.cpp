#include "citekg/kernels.hpp"

#include <cassert>
#include <cmath>

#include "citekg/common.hpp"

namespace citekg::kge {

namespace {

void check_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw ContractError(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                        std::to_string(b) + ")");
}

double mask_at(std::span<const double> mask, std::size_t i) {
  return mask.empty() ? 1.0 : mask[i];
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  check_same(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double score_complex(std::span<const double> s, std::span<const double> r,
                     std::span<const double> o) {
  check_same(s.size(), r.size(), "score_complex");
  check_same(s.size(), o.size(), "score_complex");
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < s.size(); i += 2) {
    const double a = s[i], b = s[i + 1], c = r[i], d = r[i + 1], e = o[i], f = o[i + 1];
    acc += (a * c - b * d) * e + (a * d + b * c) * f;
  }
  return acc;
}

void grad_complex(std::span<const double> s, std::span<const double> r, std::span<const double> o,
                  double up, std::span<double> gs, std::span<double> gr, std::span<double> go) {
  for (std::size_t i = 0; i + 1 < s.size(); i += 2) {
    const double a = s[i], b = s[i + 1], c = r[i], d = r[i + 1], e = o[i], f = o[i + 1];
    gs[i] += up * (c * e + d * f);
    gs[i + 1] += up * (c * f - d * e);
    gr[i] += up * (a * e + b * f);
    gr[i + 1] += up * (a * f - b * e);
    go[i] += up * (a * c - b * d);
    go[i + 1] += up * (a * d + b * c);
  }
}

double score_rotate(std::span<const double> s, std::span<const double> phases,
                    std::span<const double> o) {
  check_same(s.size(), o.size(), "score_rotate");
  check_same(s.size(), 2 * phases.size(), "score_rotate");
  double acc = 0.0;
  for (std::size_t k = 0; k < phases.size(); ++k) {
    const double a = s[2 * k], b = s[2 * k + 1];
    const double cs = std::cos(phases[k]), sn = std::sin(phases[k]);
    const double x = a * cs - b * sn - o[2 * k];
    const double y = a * sn + b * cs - o[2 * k + 1];
    acc += x * x + y * y;
  }
  return -acc;
}

void grad_rotate(std::span<const double> s, std::span<const double> phases,
                 std::span<const double> o, double up, std::span<double> gs,
                 std::span<double> gphases, std::span<double> go) {
  for (std::size_t k = 0; k < phases.size(); ++k) {
    const double a = s[2 * k], b = s[2 * k + 1];
    const double cs = std::cos(phases[k]), sn = std::sin(phases[k]);
    const double x = a * cs - b * sn - o[2 * k];
    const double y = a * sn + b * cs - o[2 * k + 1];
    // score = -(x^2 + y^2)
    const double gx = -2.0 * x * up, gy = -2.0 * y * up;
    gs[2 * k] += gx * cs + gy * sn;
    gs[2 * k + 1] += -gx * sn + gy * cs;
    gphases[k] += gx * (-a * sn - b * cs) + gy * (a * cs - b * sn);
    go[2 * k] -= gx;
    go[2 * k + 1] -= gy;
  }
}

void diachronic_embed(std::span<const double> base, std::span<const double> amp,
                      std::span<const double> freq, std::span<const double> phase, double t,
                      std::span<double> out) {
  check_same(out.size(), base.size() + amp.size(), "diachronic_embed");
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = base[i];
  auto dyn = out.subspan(base.size());
  for (std::size_t j = 0; j < amp.size(); ++j) dyn[j] = amp[j] * std::sin(freq[j] * t + phase[j]);
}

void diachronic_backward(std::span<const double> amp, std::span<const double> freq,
                         std::span<const double> phase, double t, std::span<const double> gout,
                         std::span<double> gbase, std::span<double> gamp, std::span<double> gfreq,
                         std::span<double> gphase) {
  for (std::size_t i = 0; i < gbase.size(); ++i) gbase[i] += gout[i];
  auto gdyn = gout.subspan(gbase.size());
  for (std::size_t j = 0; j < amp.size(); ++j) {
    const double arg = freq[j] * t + phase[j];
    const double sn = std::sin(arg), cs = std::cos(arg);
    gamp[j] += gdyn[j] * sn;
    gfreq[j] += gdyn[j] * amp[j] * cs * t;
    gphase[j] += gdyn[j] * amp[j] * cs;
  }
}

double score_transe(std::span<const double> s, std::span<const double> r,
                    std::span<const double> o, std::span<const double> mask) {
  check_same(s.size(), r.size(), "score_transe");
  check_same(s.size(), o.size(), "score_transe");
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double v = mask_at(mask, i) * (s[i] + r[i] - o[i]);
    acc += v * v;
  }
  return -std::sqrt(acc);
}

void grad_transe(std::span<const double> s, std::span<const double> r, std::span<const double> o,
                 std::span<const double> mask, double up, std::span<double> gs,
                 std::span<double> gr, std::span<double> go) {
  const double norm = -score_transe(s, r, o, mask);
  if (norm == 0.0) return;  // subgradient 0 at the kink
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double m = mask_at(mask, i);
    const double g = -up * m * m * (s[i] + r[i] - o[i]) / norm;
    gs[i] += g;
    gr[i] += g;
    go[i] -= g;
  }
}

double score_distmult(std::span<const double> s, std::span<const double> r,
                      std::span<const double> o, std::span<const double> mask) {
  check_same(s.size(), r.size(), "score_distmult");
  check_same(s.size(), o.size(), "score_distmult");
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += mask_at(mask, i) * s[i] * r[i] * o[i];
  return acc;
}

void grad_distmult(std::span<const double> s, std::span<const double> r,
                   std::span<const double> o, std::span<const double> mask, double up,
                   std::span<double> gs, std::span<double> gr, std::span<double> go) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double m = up * mask_at(mask, i);
    gs[i] += m * r[i] * o[i];
    gr[i] += m * s[i] * o[i];
    go[i] += m * s[i] * r[i];
  }
}

}  // namespace citekg::kge
