#pragma once
// Pure scoring kernels and their analytic gradients.
//
// Complex vectors are stored as interleaved (re, im) pairs, so a d-dimensional
// complex embedding occupies 2d doubles. RotatE relations are d phase angles.
// Every grad_* function *accumulates* `upstream * d(score)/d(param)` into the
// gradient spans.

#include <span>

namespace citekg::kge {

double dot(std::span<const double> a, std::span<const double> b);

// Re(<s, r, conj(o)>)
double score_complex(std::span<const double> s, std::span<const double> r,
                     std::span<const double> o);
void grad_complex(std::span<const double> s, std::span<const double> r, std::span<const double> o,
                  double upstream, std::span<double> gs, std::span<double> gr,
                  std::span<double> go);

// -sum_i |s_i * exp(i theta_i) - o_i|^2
double score_rotate(std::span<const double> s, std::span<const double> phases,
                    std::span<const double> o);
void grad_rotate(std::span<const double> s, std::span<const double> phases,
                 std::span<const double> o, double upstream, std::span<double> gs,
                 std::span<double> gphases, std::span<double> go);

// out = static ++ amp * sin(freq * t + phase)
void diachronic_embed(std::span<const double> base, std::span<const double> amp,
                      std::span<const double> freq, std::span<const double> phase, double t,
                      std::span<double> out);
void diachronic_backward(std::span<const double> amp, std::span<const double> freq,
                         std::span<const double> phase, double t, std::span<const double> gout,
                         std::span<double> gbase, std::span<double> gamp, std::span<double> gfreq,
                         std::span<double> gphase);

// -|| mask * (s + r - o) ||. An empty mask means no dropout.
double score_transe(std::span<const double> s, std::span<const double> r,
                    std::span<const double> o, std::span<const double> mask = {});
void grad_transe(std::span<const double> s, std::span<const double> r, std::span<const double> o,
                 std::span<const double> mask, double upstream, std::span<double> gs,
                 std::span<double> gr, std::span<double> go);

// sum_i mask_i * s_i * r_i * o_i
double score_distmult(std::span<const double> s, std::span<const double> r,
                      std::span<const double> o, std::span<const double> mask = {});
void grad_distmult(std::span<const double> s, std::span<const double> r,
                   std::span<const double> o, std::span<const double> mask, double upstream,
                   std::span<double> gs, std::span<double> gr, std::span<double> go);

}  // namespace citekg::kge
