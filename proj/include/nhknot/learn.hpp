#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "error.hpp"
#include "io.hpp"
#include "model.hpp"
#include "numerics.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace nhknot {

struct FeatureVector {
  int l = 0;
  double m1 = 0.0;
  std::vector<double> values;
};

/// Unit d vectors of one sweep sample on its k grid.
struct SampleGrid {
  int l = 0;
  double m1 = 0.0;
  std::vector<DVector> dhat;
};

/// Flattening per k: dx re, dx im, dy re, dy im, dz re, dz im; all scaled by 1/N.
inline std::vector<FeatureVector> build_features(const std::vector<SampleGrid>& samples, int n_points) {
  std::vector<FeatureVector> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (static_cast<int>(s.dhat.size()) != n_points)
      throw Error(ErrorKind::IncompleteGrid, "sample " + std::to_string(s.l) + " has " +
                                                 std::to_string(s.dhat.size()) + " of " + std::to_string(n_points) +
                                                 " grid points");
    FeatureVector f{s.l, s.m1, {}};
    f.values.reserve(6 * n_points);
    for (const auto& d : s.dhat)
      for (const auto& c : d) {
        f.values.push_back(std::real(c) / n_points);
        f.values.push_back(std::imag(c) / n_points);
      }
    out.push_back(std::move(f));
  }
  return out;
}

enum class PNorm { L1, L2, LInf };

inline PNorm parse_pnorm(const std::string& s) {
  if (s == "1" || s == "l1" || s == "L1") return PNorm::L1;
  if (s == "2" || s == "l2" || s == "L2") return PNorm::L2;
  if (s == "inf" || s == "linf" || s == "Linf" || s == "LInf") return PNorm::LInf;
  throw Error(ErrorKind::InvalidConfig, "unknown p-norm '" + s + "'");
}

inline const char* to_string(PNorm p) {
  switch (p) {
    case PNorm::L1: return "1";
    case PNorm::L2: return "2";
    case PNorm::LInf: return "inf";
  }
  return "?";
}

inline double feature_distance(const std::vector<double>& a, const std::vector<double>& b, PNorm p) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - b[i]);
    switch (p) {
      case PNorm::L1: acc += d; break;
      case PNorm::L2: acc += d * d; break;
      case PNorm::LInf: acc = std::max(acc, d); break;
    }
  }
  return p == PNorm::L2 ? std::sqrt(acc) : acc;
}

/// K = exp(-||x - x'||^2 / (2 eps))
inline DenseMatrix<double> kernel_matrix(const std::vector<FeatureVector>& x, double epsilon, PNorm p = PNorm::L1) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw Error(ErrorKind::InvalidEpsilon, "epsilon must be positive");
  const std::size_t n = x.size();
  for (const auto& f : x)
    if (f.values.size() != x.front().values.size())
      throw Error(ErrorKind::IncompleteGrid, "feature vectors differ in length");
  DenseMatrix<double> k(n, n);
  parallel_for(n, [&](std::size_t i) {
    k(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = feature_distance(x[i].values, x[j].values, p);
      k(i, j) = std::exp(-d * d / (2.0 * epsilon));
    }
  });
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) k(j, i) = k(i, j);
  return k;
}

struct MarkovChain {
  DenseMatrix<double> K;
  DenseMatrix<double> P;        ///< row-stochastic
  std::vector<double> degree;  ///< row sums of K
};

inline MarkovChain transition_matrix(const DenseMatrix<double>& k) {
  MarkovChain m{k, DenseMatrix<double>(k.rows, k.cols), std::vector<double>(k.rows, 0.0)};
  for (std::size_t i = 0; i < k.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k.cols; ++j) s += k(i, j);
    m.degree[i] = s;
    for (std::size_t j = 0; j < k.cols; ++j) m.P(i, j) = k(i, j) / s;
  }
  return m;
}

struct DiffusionSpectrum {
  std::vector<double> lambda;  ///< descending
  DenseMatrix<double> psi;     ///< column k is the right eigenvector psi_k of P
};

/// Spectrum of P via S = D^{-1/2} K D^{-1/2}; psi_k = D^{-1/2} v_k with orthonormal v_k.
inline DiffusionSpectrum diffusion_spectrum(const MarkovChain& m) {
  const std::size_t n = m.P.rows;
  DenseMatrix<double> s(n, n);
  std::vector<double> rs(n);
  for (std::size_t i = 0; i < n; ++i) rs[i] = 1.0 / std::sqrt(m.degree[i]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s(i, j) = 0.5 * (m.K(i, j) + m.K(j, i)) * rs[i] * rs[j];
  auto e = jacobi_eigh(s);
  // the stationary direction is known exactly; rebuild the lambda = 1 group around it
  std::size_t group = 1;
  while (group < n && std::abs(e.values[group] - e.values[0]) <= 1e-10) ++group;
  {
    double nrm = 0.0;
    for (std::size_t i = 0; i < n; ++i) nrm += m.degree[i];
    nrm = std::sqrt(nrm);
    std::vector<std::vector<double>> basis;
    std::vector<double> v0(n);
    for (std::size_t i = 0; i < n; ++i) v0[i] = std::sqrt(m.degree[i]) / nrm;
    basis.push_back(v0);
    for (std::size_t c = 0; c < group && basis.size() < group; ++c) {
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = e.vectors(i, c);
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& b : basis) {
          double d = 0.0;
          for (std::size_t i = 0; i < n; ++i) d += b[i] * v[i];
          for (std::size_t i = 0; i < n; ++i) v[i] -= d * b[i];
        }
      double len = 0.0;
      for (double x : v) len += x * x;
      len = std::sqrt(len);
      if (len < 1e-6) continue;
      for (double& x : v) x /= len;
      basis.push_back(v);
    }
    for (std::size_t c = 0; c < basis.size(); ++c) {
      e.values[c] = e.values[0];
      for (std::size_t i = 0; i < n; ++i) e.vectors(i, c) = basis[c][i];
    }
  }
  DiffusionSpectrum out{e.values, DenseMatrix<double>(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    double big = 0.0;
    for (std::size_t i = 0; i < n; ++i) big = std::max(big, std::abs(e.vectors(i, k) * rs[i]));
    double sign = 0.0;
    for (std::size_t i = 0; i < n && sign == 0.0; ++i) {
      const double v = e.vectors(i, k) * rs[i];
      if (std::abs(v) > 1e-12 * big) sign = v > 0.0 ? 1.0 : -1.0;
    }
    if (sign == 0.0) sign = 1.0;
    for (std::size_t i = 0; i < n; ++i) out.psi(i, k) = sign * e.vectors(i, k) * rs[i];
  }
  return out;
}

/// Diffusion coordinates lambda_k^t psi_k(l) for k >= 1; row l, column k - 1.
inline DenseMatrix<double> embed(const DiffusionSpectrum& s, int t_steps) {
  if (t_steps < 1) throw Error(ErrorKind::InvalidConfig, "diffusion time must be >= 1");
  const std::size_t n = s.lambda.size();
  DenseMatrix<double> y(n, n > 0 ? n - 1 : 0);
  for (std::size_t k = 1; k < n; ++k) {
    const double w = std::pow(s.lambda[k], t_steps);
    for (std::size_t l = 0; l < n; ++l) y(l, k - 1) = w * s.psi(l, k);
  }
  return y;
}

/// Squared diffusion distance from the spectral sum.
inline double diffusion_distance2(const DiffusionSpectrum& s, int t_steps, std::size_t a, std::size_t b) {
  double acc = 0.0;
  for (std::size_t k = 1; k < s.lambda.size(); ++k) {
    const double d = s.psi(a, k) - s.psi(b, k);
    acc += std::pow(s.lambda[k], 2 * t_steps) * d * d;
  }
  return acc;
}

struct Clustering {
  int n_raw = 0;
  int n_clusters = 0;
  std::vector<int> labels;
  std::vector<bool> outlier;
  int dims = 0;
};

namespace detail {

struct KMeansRun {
  std::vector<int> assign;
  std::vector<std::vector<double>> centers;
  double inertia = 0.0;
};

inline double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

/// k-means++ seeding followed by Lloyd iterations.
inline KMeansRun kmeans(const std::vector<std::vector<double>>& x, int k, std::mt19937_64& rng) {
  const std::size_t n = x.size();
  KMeansRun r;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  r.centers.push_back(x[std::min<std::size_t>(n - 1, static_cast<std::size_t>(uni(rng) * n))]);
  std::vector<double> d(n);
  while (static_cast<int>(r.centers.size()) < k) {
    double tot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = std::numeric_limits<double>::infinity();
      for (const auto& c : r.centers) d[i] = std::min(d[i], dist2(x[i], c));
      tot += d[i];
    }
    std::size_t pick = 0;
    if (tot > 0.0) {
      double u = uni(rng) * tot;
      for (pick = 0; pick + 1 < n; ++pick) {
        u -= d[pick];
        if (u <= 0.0) break;
      }
    }
    r.centers.push_back(x[pick]);
  }
  r.assign.assign(n, -1);
  for (int it = 0; it < 300; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = dist2(x[i], r.centers[0]);
      for (int c = 1; c < k; ++c) {
        const double dd = dist2(x[i], r.centers[c]);
        if (dd < bd) {
          bd = dd;
          best = c;
        }
      }
      if (r.assign[i] != best) {
        r.assign[i] = best;
        changed = true;
      }
    }
    for (int c = 0; c < k; ++c) {
      std::vector<double> m(x[0].size(), 0.0);
      int cnt = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (r.assign[i] == c) {
          ++cnt;
          for (std::size_t j = 0; j < m.size(); ++j) m[j] += x[i][j];
        }
      if (cnt == 0) continue;
      for (double& v : m) v /= cnt;
      r.centers[c] = m;
    }
    if (!changed) break;
  }
  r.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) r.inertia += dist2(x[i], r.centers[r.assign[i]]);
  return r;
}

}  // namespace detail

struct ClusterOptions {
  double delta = 0.01;
  std::uint64_t seed = 1;
  int restarts = 50;
  int min_cluster = 2;
};

/// Cluster count from lambda >= 1 - delta, k-means on the leading coordinates, and
/// merging of clusters smaller than min_cluster. Labels are renumbered in m1 order.
inline Clustering count_and_cluster(const DiffusionSpectrum& s, const DenseMatrix<double>& y,
                                    const std::vector<double>& m1, const ClusterOptions& opt = {}) {
  if (!(opt.delta > 0.0 && opt.delta < 0.5)) throw Error(ErrorKind::InvalidConfig, "delta must lie in (0, 0.5)");
  const std::size_t n = y.rows;
  Clustering out;
  out.labels.assign(n, 0);
  out.outlier.assign(n, false);
  for (double l : s.lambda)
    if (l >= 1.0 - opt.delta) ++out.n_raw;
  if (out.n_raw <= 1 || n < 2) {
    out.n_clusters = 1;
    return out;
  }
  const int k = std::min<int>(out.n_raw, static_cast<int>(n));
  const int dims = std::min<int>(out.n_raw - 1, static_cast<int>(y.cols));
  out.dims = dims;
  std::vector<std::vector<double>> x(n, std::vector<double>(dims));
  double spread = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (int d = 0; d < dims; ++d) x[i][d] = y(i, d);
  for (std::size_t i = 1; i < n; ++i) spread = std::max(spread, detail::dist2(x[i], x[0]));
  if (spread <= 1e-24) throw Error(ErrorKind::DegenerateEmbedding, "all embedded points coincide");

  std::vector<detail::KMeansRun> runs(opt.restarts);
  parallel_for(opt.restarts, [&](std::size_t r) {
    auto rng = counter_rng(opt.seed, 0x6b6d, r);
    runs[r] = detail::kmeans(x, k, rng);
  });
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].inertia < runs[best].inertia * (1.0 - 1e-12)) best = r;
  std::vector<int> assign = runs[best].assign;

  std::vector<int> size(k, 0);
  for (int a : assign) ++size[a];
  std::vector<bool> small(k, false);
  int n_small = 0;
  for (int c = 0; c < k; ++c)
    if (size[c] < opt.min_cluster) {
      small[c] = true;
      ++n_small;
    }
  if (n_small == k) throw Error(ErrorKind::DegenerateEmbedding, "every cluster is below the minimum size");
  // outliers join the nearest regular centroid after removing their own embedding direction;
  // the distance is invariant under rotations inside degenerate eigenspaces
  std::vector<std::vector<double>> centers(k, std::vector<double>(dims, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    if (!small[assign[i]])
      for (int d = 0; d < dims; ++d) centers[assign[i]][d] += x[i][d] / size[assign[i]];
  for (std::size_t i = 0; i < n; ++i) {
    if (!small[assign[i]]) continue;
    out.outlier[i] = true;
    const double len = std::sqrt(detail::dist2(x[i], std::vector<double>(dims, 0.0)));
    std::vector<double> u(dims, 0.0);
    if (len > 0.0)
      for (int d = 0; d < dims; ++d) u[d] = x[i][d] / len;
    int bestc = -1;
    double bd = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (small[c]) continue;
      std::vector<double> diff(dims);
      double along = 0.0;
      for (int d = 0; d < dims; ++d) {
        diff[d] = x[i][d] - centers[c][d];
        along += diff[d] * u[d];
      }
      double dd = 0.0;
      for (int d = 0; d < dims; ++d) dd += (diff[d] - along * u[d]) * (diff[d] - along * u[d]);
      if (dd < bd) {
        bd = dd;
        bestc = c;
      }
    }
    assign[i] = bestc;
  }
  out.n_clusters = k - n_small;
  // renumber by first appearance in m1 order
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return m1[a] < m1[b]; });
  std::map<int, int> rename;
  for (std::size_t i : order)
    if (!rename.count(assign[i])) {
      const int next = static_cast<int>(rename.size());
      rename[assign[i]] = next;
    }
  for (std::size_t i = 0; i < n; ++i) out.labels[i] = rename[assign[i]];
  return out;
}

/// Midpoints of adjacent non-outlier m1 values across each label change.
inline std::vector<double> boundaries(const std::vector<int>& labels, const std::vector<double>& m1,
                                      const std::vector<bool>& outlier = {}) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (outlier.empty() || !outlier[i]) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return m1[a] < m1[b]; });
  std::vector<double> out;
  std::vector<int> seen;
  for (std::size_t j = 0; j < order.size(); ++j) {
    const int lab = labels[order[j]];
    if (j > 0 && lab != labels[order[j - 1]]) {
      if (std::find(seen.begin(), seen.end(), lab) != seen.end())
        throw Error(ErrorKind::NonContiguous, "label " + std::to_string(lab) + " reappears after a change");
      out.push_back(0.5 * (m1[order[j - 1]] + m1[order[j]]));
    }
    if (seen.empty() || seen.back() != lab) seen.push_back(lab);
  }
  return out;
}

/// Sample ids l such that the label changes between l and the next sample in m1 order.
inline std::vector<int> label_changes(const std::vector<int>& labels, const std::vector<double>& m1,
                                      const std::vector<int>& ids) {
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return m1[a] < m1[b]; });
  std::vector<int> out;
  for (std::size_t j = 1; j < order.size(); ++j)
    if (labels[order[j]] != labels[order[j - 1]]) out.push_back(ids[order[j - 1]]);
  return out;
}

struct DiffusionOptions {
  double epsilon = 0.08;
  PNorm norm = PNorm::L1;
  int t_steps = 100;
  ClusterOptions cluster;
};

struct DiffusionResult {
  MarkovChain chain;
  DiffusionSpectrum spectrum;
  DenseMatrix<double> embedding;
  Clustering clustering;
  std::vector<double> boundary_m1;
  std::vector<int> change_after;  ///< sample ids after which the label changes
};

inline DiffusionResult run_diffusion_map(const std::vector<FeatureVector>& x, const DiffusionOptions& opt = {}) {
  DiffusionResult r;
  r.chain = transition_matrix(kernel_matrix(x, opt.epsilon, opt.norm));
  r.spectrum = diffusion_spectrum(r.chain);
  r.embedding = embed(r.spectrum, opt.t_steps);
  std::vector<double> m1;
  std::vector<int> ids;
  for (const auto& f : x) {
    m1.push_back(f.m1);
    ids.push_back(f.l);
  }
  r.clustering = count_and_cluster(r.spectrum, r.embedding, m1, opt.cluster);
  r.boundary_m1 = boundaries(r.clustering.labels, m1, r.clustering.outlier);
  r.change_after = label_changes(r.clustering.labels, m1, ids);
  return r;
}

inline void write_labels_csv(std::ostream& os, const std::vector<FeatureVector>& x, const Clustering& c) {
  os << "l,m1,label,outlier\n";
  for (std::size_t i = 0; i < x.size(); ++i) {
    CsvRow row(os);
    row << x[i].l << x[i].m1 << c.labels[i] << (c.outlier[i] ? 1 : 0);
  }
}

inline void write_spectrum_csv(std::ostream& os, const DiffusionSpectrum& s) {
  os << "index,lambda\n";
  for (std::size_t k = 0; k < s.lambda.size(); ++k) {
    CsvRow row(os);
    row << k << s.lambda[k];
  }
}

inline void write_matrix_csv(std::ostream& os, const DenseMatrix<double>& m) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    CsvRow row(os);
    for (std::size_t j = 0; j < m.cols; ++j) row << m(i, j);
  }
}

}  // namespace nhknot
