#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <functional>
#include <string>
#include <vector>

#include "error.hpp"
#include "io.hpp"
#include "model.hpp"
#include "numerics.hpp"

namespace nhknot {

enum class KnotLabel { HopfLink, Unknot, Unlink };

inline const char* to_string(KnotLabel l) {
  switch (l) {
    case KnotLabel::HopfLink: return "HopfLink";
    case KnotLabel::Unknot: return "Unknot";
    case KnotLabel::Unlink: return "Unlink";
  }
  return "?";
}

/// Phase from the boundary curves m1^2 + m2^2 = 1 and m2 = +-m1 - 1.
/// Inside the circle and above both lines: Hopf link; exactly one of the two: unknot; neither: unlink.
inline KnotLabel phase_label_analytic(const TwisterParams& p) {
  const double circle = std::abs(std::hypot(p.m1, p.m2) - 1.0);
  const double line_a = std::abs(p.m2 - p.m1 + 1.0) / std::sqrt(2.0);
  const double line_b = std::abs(p.m2 + p.m1 + 1.0) / std::sqrt(2.0);
  if (std::min({circle, line_a, line_b}) <= 1e-9)
    throw Error(ErrorKind::OnBoundary, "parameters lie on a phase boundary");
  const bool inside = p.m1 * p.m1 + p.m2 * p.m2 < 1.0;
  const bool above = std::abs(p.m1) < p.m2 + 1.0;
  if (inside && above) return KnotLabel::HopfLink;
  if (inside != above) return KnotLabel::Unknot;
  return KnotLabel::Unlink;
}

/// Trace form t_b = Tr[(|R1><L1| - |R2><L2|) sigma_b], scaled to unit quadratic norm.
/// The root of t.t closest to +2 is used, so the result equals d / E1 for the given band labels.
inline DVector unit_d_from_states(const BiorthEigensystem& es) {
  const Matrix2C a = outer(es.R[0], es.L[0]) - outer(es.R[1], es.L[1]);
  DVector t{};
  for (int b = 0; b < 3; ++b) t[b] = (a * pauli(b + 1)).trace();
  const Complex q = dot(t, t);
  if (std::abs(q) <= 1e-12) throw Error(ErrorKind::ExceptionalPoint, "projector difference has zero quadratic norm");
  Complex r = std::sqrt(q);
  if (std::real(r) < 0.0) r = -r;
  return {t[0] / r, t[1] / r, t[2] / r};
}

/// E_n = <L_n|H|R_n>
inline std::array<Complex, 2> band_energies(const BiorthEigensystem& es, const Matrix2C& h) {
  return {inner(es.L[0], h * es.R[0]), inner(es.L[1], h * es.R[1])};
}

/// Bands over a k grid in continuity order: index 0 follows the band that is band 1 at k_1.
struct BandLoop {
  std::vector<double> k;
  std::vector<BiorthEigensystem> bands;
  bool swap = false;  ///< tracked band returns as its partner after one period
};

namespace detail {

/// Decides whether `next` must be swapped to continue `prev`; nullopt when ambiguous.
inline std::optional<bool> continuation(const BiorthEigensystem& prev, const BiorthEigensystem& next) {
  auto ov = [](const Vec2& a, const Vec2& b) { return std::abs(inner(a, b)); };
  const double same = ov(prev.R[0], next.R[0]) + ov(prev.R[1], next.R[1]);
  const double cross = ov(prev.R[0], next.R[1]) + ov(prev.R[1], next.R[0]);
  const bool swap = cross > same;
  const double o0 = swap ? ov(prev.R[0], next.R[1]) : ov(prev.R[0], next.R[0]);
  const double o1 = swap ? ov(prev.R[1], next.R[0]) : ov(prev.R[1], next.R[1]);
  if (o0 <= 0.7 || o1 <= 0.7) return std::nullopt;
  const double e_same = std::abs(prev.E[0] - next.E[0]) + std::abs(prev.E[1] - next.E[1]);
  const double e_cross = std::abs(prev.E[0] - next.E[1]) + std::abs(prev.E[1] - next.E[0]);
  if ((e_cross < e_same) != swap) return std::nullopt;
  return swap;
}

}  // namespace detail

/// Continuity tracking of the two bands of h(k) along an ascending grid in (0, 2 pi].
/// Each interval is subdivided (at least 256 points per period, refined up to x16).
inline BandLoop track_bands(const std::function<Matrix2C(double)>& h, const std::vector<double>& grid) {
  if (grid.size() < 2) throw Error(ErrorKind::InvalidMomentum, "tracking grid needs at least two points");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw Error(ErrorKind::InvalidMomentum, "grid must be ascending");
  const std::size_t n = grid.size();
  const int base = std::max(1, static_cast<int>(std::ceil(256.0 / n)));
  BandLoop loop;
  loop.k = grid;
  BiorthEigensystem cur = biorth_eigensystem(h(grid[0]));
  const BiorthEigensystem first = cur;
  loop.bands.push_back(cur);
  for (std::size_t j = 0; j < n; ++j) {
    const double a = grid[j];
    const double b = j + 1 < n ? grid[j + 1] : grid[0] + 2.0 * kPi;
    bool done = false;
    for (int level = 1; level <= 16 && !done; level *= 2) {
      const int sub = base * level;
      BiorthEigensystem walk = cur;
      bool ok = true;
      for (int s = 1; s <= sub && ok; ++s) {
        BiorthEigensystem nxt = biorth_eigensystem(h(a + (b - a) * s / sub));
        const auto c = detail::continuation(walk, nxt);
        if (!c) {
          ok = false;
          break;
        }
        if (*c) swap_bands(nxt);
        walk = nxt;
      }
      if (ok) {
        cur = walk;
        done = true;
      }
    }
    if (!done)
      throw Error(ErrorKind::TrackingAmbiguous, "band continuation ambiguous near k = " + format_number(a));
    if (j + 1 < n) loop.bands.push_back(cur);
  }
  // cur now sits at k_1 + 2 pi
  const double same = std::abs(inner(first.R[0], cur.R[0]));
  const double cross = std::abs(inner(first.R[0], cur.R[1]));
  loop.swap = cross > same;
  return loop;
}

inline BandLoop track_bands(const TwisterParams& p, const std::vector<double>& grid) {
  return track_bands([&p](double k) { return hamiltonian(p, k); }, grid);
}

/// Loop assembled from measured states that already carry continuity order.
inline BandLoop loop_from_states(const std::vector<double>& k, const std::vector<BiorthEigensystem>& bands, bool swap) {
  return BandLoop{k, bands, swap};
}

struct BerryPhase {
  double Q = 0.0;       ///< over the closed cycle (0 -> 4 pi for a swap)
  double Q_half = 0.0;  ///< Q / 2: per-period value, metadata only for a swap
  bool swap = false;
};

/// Q = -(1/pi) sum_n arg prod_i [<L_n(k_{i+1})|R_n(k_i)> / <L_n(k_i)|R_n(k_i)>] over each band's closed cycle.
/// The product is gauge invariant; each band's share -arg/pi is taken in [-1/2, 3/2).
inline BerryPhase berry_phase_Q(const BandLoop& loop) {
  const std::size_t n = loop.k.size();
  if (n < 2 || loop.bands.size() != n) throw Error(ErrorKind::InvalidMomentum, "malformed band loop");
  auto run = [&](int start_band) {
    std::vector<std::pair<std::size_t, int>> nodes;
    const int laps = loop.swap ? 2 : 1;
    for (int lap = 0; lap < laps; ++lap)
      for (std::size_t i = 0; i < n; ++i) nodes.emplace_back(i, lap % 2 == 0 ? start_band : 1 - start_band);
    Complex prod = 1.0;
    for (std::size_t s = 0; s < nodes.size(); ++s) {
      const auto [i, bi] = nodes[s];
      const auto [j, bj] = nodes[(s + 1) % nodes.size()];
      const auto& a = loop.bands[i];
      const auto& b = loop.bands[j];
      if (std::abs(inner(b.R[bj], a.R[bi])) / (norm(b.R[bj]) * norm(a.R[bi])) < 0.7)
        throw Error(ErrorKind::BranchJump, "grid too coarse for the Berry phase near k = " + format_number(loop.k[i]));
      const Complex step = inner(b.L[bj], a.R[bi]) / inner(a.L[bi], a.R[bi]);
      prod *= step / std::abs(step);
    }
    double q = -std::arg(prod) / kPi;
    if (q < -0.5) q += 2.0;
    return q;
  };
  BerryPhase out;
  out.swap = loop.swap;
  out.Q = run(0) + run(1);
  out.Q_half = out.Q / 2.0;
  return out;
}

/// Winding of d.d around the origin over one period; the grid is refined until every step is below pi/2.
inline int discriminant_winding(const std::function<Complex(double)>& disc, std::vector<double> grid) {
  for (int level = 0; level <= 12; ++level) {
    double total = 0.0, worst = 0.0;
    const std::size_t n = grid.size();
    std::vector<Complex> v(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = disc(grid[i]);
      if (std::abs(v[i]) <= 1e-10) throw Error(ErrorKind::NearDegenerate, "discriminant vanishes on the grid");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double d = std::arg(v[(i + 1) % n] / v[i]);
      worst = std::max(worst, std::abs(d));
      total += d;
    }
    if (worst < kPi / 2.0) return static_cast<int>(std::lround(total / (2.0 * kPi)));
    std::vector<double> fine;
    fine.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = grid[i];
      const double b = i + 1 < n ? grid[i + 1] : grid[0] + 2.0 * kPi;
      fine.push_back(a);
      fine.push_back(0.5 * (a + b));
    }
    grid = std::move(fine);
  }
  throw Error(ErrorKind::NearDegenerate, "winding grid refinement exhausted");
}

inline int discriminant_winding(const TwisterParams& p, const std::vector<double>& grid) {
  return discriminant_winding([&p](double k) { return discriminant(p, k); }, grid);
}

struct ProjectionOverlaps {
  int count = 0;
  std::vector<double> k;  ///< interpolated crossing momenta
};

/// Sign changes of Im E_A - Im E_B along a tracked loop, including the wrap to k_1 + 2 pi.
inline ProjectionOverlaps projection_overlaps(const BandLoop& loop, double zero_tol = 1e-9) {
  const std::size_t n = loop.k.size();
  std::vector<double> k, f;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = std::imag(loop.bands[i].E[0]) - std::imag(loop.bands[i].E[1]);
    if (std::abs(v) <= zero_tol) continue;
    k.push_back(loop.k[i]);
    f.push_back(v);
  }
  ProjectionOverlaps out;
  if (f.empty()) return out;
  // after one period band A has become band B when the loop swaps
  k.push_back(k.front() + 2.0 * kPi);
  f.push_back(loop.swap ? -f.front() : f.front());
  for (std::size_t i = 0; i + 1 < f.size(); ++i)
    if ((f[i] > 0.0) != (f[i + 1] > 0.0)) {
      ++out.count;
      const double kc = k[i] + (k[i + 1] - k[i]) * f[i] / (f[i] - f[i + 1]);
      out.k.push_back(std::fmod(kc, 2.0 * kPi));
    }
  return out;
}

/// Midpoint grid k_i = (i + 1/2) 2 pi / M, which avoids the real-spectrum points of the sweep.
inline std::vector<double> midpoint_grid(int m) {
  std::vector<double> g(m);
  for (int i = 0; i < m; ++i) g[i] = (i + 0.5) * 2.0 * kPi / m;
  return g;
}

/// Band labels per grid point for reporting: band 1 is the band tracked continuously
/// from the Im-larger band at k_1.
inline std::vector<BiorthEigensystem> labeled_eigensystems(const TwisterParams& p, const std::vector<double>& grid) {
  return track_bands(p, grid).bands;
}

inline BiorthEigensystem labeled_eigensystem(const TwisterParams& p, double k, int grid_points = 16) {
  std::vector<double> grid = momentum_grid(grid_points);
  bool on_grid = false;
  for (double g : grid) on_grid = on_grid || std::abs(g - k) < 1e-12;
  if (!on_grid) {
    grid.push_back(k);
    std::sort(grid.begin(), grid.end());
  }
  const auto all = labeled_eigensystems(p, grid);
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (std::abs(grid[i] - k) < 1e-12) return all[i];
  return biorth_eigensystem(hamiltonian(p, k));
}

struct KnotReport {
  TwisterParams p;
  int W = 0;
  double Q = 0.0;
  bool swap = false;
  KnotLabel analytic = KnotLabel::Unlink;
  KnotLabel winding = KnotLabel::Unlink;
  KnotLabel berry = KnotLabel::Unlink;
  KnotLabel label = KnotLabel::Unlink;
};

inline KnotLabel label_from_winding(int w) {
  switch (w) {
    case 2: return KnotLabel::HopfLink;
    case 1: return KnotLabel::Unknot;
    case 0: return KnotLabel::Unlink;
  }
  throw Error(ErrorKind::Inconsistent, "winding " + std::to_string(w) + " has no knot label");
}

inline KnotLabel label_from_berry(double q, bool swap) {
  if (swap) return KnotLabel::Unknot;
  if (std::abs(q - 2.0) < 0.5) return KnotLabel::HopfLink;
  if (std::abs(q) < 0.5) return KnotLabel::Unlink;
  throw Error(ErrorKind::Inconsistent, "Q = " + format_number(q) + " with identity permutation has no knot label");
}

/// Berry phase on a 256-point grid, doubled until no branch jump occurs.
inline BerryPhase berry_phase(const TwisterParams& p, int points = 256) {
  for (int m = points; m <= 16 * points; m *= 2) {
    try {
      return berry_phase_Q(track_bands(p, momentum_grid(m)));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::BranchJump || m * 2 > 16 * points) throw;
    }
  }
  throw Error(ErrorKind::BranchJump, "unreachable");
}

inline KnotReport classify_knot(const TwisterParams& p) {
  KnotReport r;
  r.p = p;
  r.analytic = phase_label_analytic(p);
  r.W = discriminant_winding(p, momentum_grid(256));
  const BerryPhase b = berry_phase(p);
  r.Q = b.Q;
  r.swap = b.swap;
  r.winding = label_from_winding(r.W);
  r.berry = label_from_berry(r.Q, r.swap);
  if (r.winding != r.analytic || r.berry != r.analytic)
    throw Error(ErrorKind::Inconsistent, std::string("analytic=") + to_string(r.analytic) +
                                             " winding=" + to_string(r.winding) + " berry=" + to_string(r.berry));
  r.label = r.analytic;
  return r;
}

inline void write_bands_csv(std::ostream& os, const BandLoop& loop) {
  os << "k,ReE1,ImE1,ReE2,ImE2\n";
  for (std::size_t i = 0; i < loop.k.size(); ++i) {
    CsvRow row(os);
    row << loop.k[i] << std::real(loop.bands[i].E[0]) << std::imag(loop.bands[i].E[0])
        << std::real(loop.bands[i].E[1]) << std::imag(loop.bands[i].E[1]);
  }
}

}  // namespace nhknot
