// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The dgd-lab Authors

// Shared fixtures and independent reference implementations for the tests.
// Nothing here calls into the library's math; it only builds inputs.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "dgd/nn.hpp"
#include "dgd/tensor.hpp"
#include "dgd/rng.hpp"

namespace dgd::testing {

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

/// Random encoder with ReLU hidden layers; biases are nonzero so units sit on
/// both sides of the kink.
inline EncoderModel random_encoder(std::size_t input, const std::vector<std::size_t>& widths,
                                   Rng& rng) {
  EncoderModel m;
  std::size_t in = input;
  for (auto w : widths) {
    DenseLayer layer;
    layer.weights = random_tensor({w, in}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
    layer.bias = random_tensor({w}, rng, 0.3);
    layer.activation = Activation::ReLU;
    m.layers.push_back(std::move(layer));
    in = w;
  }
  return m;
}

inline ClassifierHead random_head(std::size_t d, std::size_t classes, Rng& rng) {
  ClassifierHead h;
  h.weights = random_tensor({classes, d}, rng, 1.0);
  h.bias = random_tensor({classes}, rng, 0.5);
  return h;
}

// ---- reference math --------------------------------------------------------

inline std::vector<long double> ref_forward(const EncoderModel& m, const std::vector<double>& x,
                                            const std::vector<double>* gate = nullptr) {
  std::vector<long double> a(x.begin(), x.end());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    std::vector<long double> z(layer.outputs());
    for (std::size_t o = 0; o < layer.outputs(); ++o) {
      long double acc = layer.bias[o];
      for (std::size_t i = 0; i < layer.inputs(); ++i) {
        acc += static_cast<long double>(layer.weights.at(o, i)) * a[i];
      }
      z[o] = layer.activation == Activation::ReLU ? std::max<long double>(acc, 0.0L) : acc;
    }
    a = std::move(z);
  }
  if (gate != nullptr) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] *= (*gate)[i];
  }
  return a;
}

inline long double ref_loss(const ClassifierHead& h, const std::vector<long double>& g,
                            std::size_t label) {
  std::vector<long double> logits(h.num_classes());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    long double acc = h.bias[k];
    for (std::size_t i = 0; i < g.size(); ++i) {
      acc += static_cast<long double>(h.weights.at(k, i)) * g[i];
    }
    logits[k] = acc;
  }
  const long double top = *std::max_element(logits.begin(), logits.end());
  long double sum = 0.0L;
  for (auto v : logits) sum += std::exp(v - top);
  return top + std::log(sum) - logits[label];
}

/// Brute-force impact: the full network is re-run with neuron i zeroed.
inline std::vector<double> ref_impact(const EncoderModel& m, const ClassifierHead& h,
                                      const std::vector<double>& x, std::size_t label) {
  const std::size_t d = m.feature_dim();
  const long double base = ref_loss(h, ref_forward(m, x), label);
  std::vector<double> s(d);
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<double> gate(d, 1.0);
    gate[i] = 0.0;
    s[i] = static_cast<double>(ref_loss(h, ref_forward(m, x, &gate), label) - base);
  }
  return s;
}

/// Average ranks (ties share the mean rank), 1-based.
inline std::vector<double> ref_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0.0;
    double equal = 0.0;
    for (double w : v) {
      if (w < v[i]) less += 1.0;
      if (w == v[i]) equal += 1.0;
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

inline double ref_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double ref_spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return ref_pearson(ref_ranks(a), ref_ranks(b));
}

/// CMC by enumerating every (probe, gallery) distance. Ties count against the
/// probe unless the tied gallery row has a higher index than the match.
inline std::vector<double> ref_cmc(const std::vector<std::vector<double>>& probes,
                                   const std::vector<int>& probe_ids,
                                   const std::vector<std::vector<double>>& gallery,
                                   const std::vector<int>& gallery_ids, std::size_t max_rank) {
  std::vector<double> hits(max_rank, 0.0);
  for (std::size_t p = 0; p < probes.size(); ++p) {
    auto dist = [&](std::size_t g) {
      double acc = 0.0;
      for (std::size_t k = 0; k < probes[p].size(); ++k) {
        const double diff = probes[p][k] - gallery[g][k];
        acc += diff * diff;
      }
      return acc;
    };
    std::size_t match = 0;
    while (gallery_ids[match] != probe_ids[p]) ++match;
    const double dm = dist(match);
    std::size_t rank = 0;
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      const double dg = dist(g);
      if (dg < dm || (dg == dm && g < match)) ++rank;
    }
    for (std::size_t k = rank; k < max_rank; ++k) hits[k] += 1.0;
  }
  for (auto& h : hits) h /= static_cast<double>(probes.size());
  return hits;
}

// ---- finite differences ----------------------------------------------------

/// |a - b| / max(|a|, |b|, floor).
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// True when every pre-activation sits at least `margin` away from the ReLU
/// kink, so a central difference of width 2h never straddles it.
inline bool away_from_kinks(const EncoderModel& m, const std::vector<double>& x,
                            double margin) {
  std::vector<long double> a(x.begin(), x.end());
  for (const auto& layer : m.layers) {
    std::vector<long double> z(layer.outputs());
    for (std::size_t o = 0; o < layer.outputs(); ++o) {
      long double acc = layer.bias[o];
      for (std::size_t i = 0; i < layer.inputs(); ++i) {
        acc += static_cast<long double>(layer.weights.at(o, i)) * a[i];
      }
      if (layer.activation == Activation::ReLU && std::abs(acc) < margin) return false;
      z[o] = layer.activation == Activation::ReLU ? std::max<long double>(acc, 0.0L) : acc;
    }
    a = std::move(z);
  }
  return true;
}

struct GradCheck {
  double max_param_error = 0.0;
  double max_hessian_error = 0.0;
  std::size_t params = 0;
};

/// Compares `backward` against central differences of the extended-precision
/// reference loss (parameters) and of the reference feature gradient
/// W^T (p - y) (diagonal Hessian).
inline GradCheck finite_difference_check(EncoderModel model, ClassifierHead head,
                                         const std::vector<double>& x, std::size_t label,
                                         const GradientSet& analytic, double h = 1e-5) {
  GradCheck out;
  auto loss = [&] { return ref_loss(head, ref_forward(model, x), label); };
  auto probe = [&](Tensor& param, const Tensor& grad) {
    for (std::size_t k = 0; k < param.size(); ++k) {
      const double saved = param[k];
      param[k] = saved + h;
      const long double up = loss();
      param[k] = saved - h;
      const long double down = loss();
      param[k] = saved;
      const double numeric = static_cast<double>((up - down) / (2.0L * h));
      out.max_param_error = std::max(out.max_param_error, relative_error(grad[k], numeric));
      ++out.params;
    }
  };
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    probe(model.layers[l].weights, analytic.encoder[l].weights);
    probe(model.layers[l].bias, analytic.encoder[l].bias);
  }
  probe(head.weights, analytic.head.weights);
  probe(head.bias, analytic.head.bias);

  const auto g = ref_forward(model, x);
  auto feature_grad = [&](std::vector<long double> feat, std::size_t i) {
    std::vector<long double> logits(head.num_classes());
    long double top = -1e300L;
    for (std::size_t k = 0; k < logits.size(); ++k) {
      long double acc = head.bias[k];
      for (std::size_t j = 0; j < feat.size(); ++j) {
        acc += static_cast<long double>(head.weights.at(k, j)) * feat[j];
      }
      logits[k] = acc;
      top = std::max(top, acc);
    }
    long double sum = 0.0L;
    for (auto& v : logits) sum += (v = std::exp(v - top));
    long double grad = 0.0L;
    for (std::size_t k = 0; k < logits.size(); ++k) {
      const long double p = logits[k] / sum - (k == label ? 1.0L : 0.0L);
      grad += static_cast<long double>(head.weights.at(k, i)) * p;
    }
    return grad;
  };
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto up = g;
    auto down = g;
    up[i] += h;
    down[i] -= h;
    const double numeric =
        static_cast<double>((feature_grad(up, i) - feature_grad(down, i)) / (2.0L * h));
    out.max_hessian_error = std::max(
        out.max_hessian_error, relative_error(analytic.diag_hessian_features[i], numeric));
  }
  return out;
}

using Rows = std::vector<std::vector<double>>;

inline Rows random_rows(std::size_t n, std::size_t d, Rng& rng) {
  Rows rows(n, std::vector<double>(d));
  for (auto& r : rows) {
    for (auto& v : r) v = rng.normal();
  }
  return rows;
}

/// Random orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
inline Rows random_orthogonal(std::size_t d, Rng& rng) {
  Rows q = random_rows(d, d, rng);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double dot = std::inner_product(q[i].begin(), q[i].end(), q[j].begin(), 0.0);
      for (std::size_t k = 0; k < d; ++k) q[i][k] -= dot * q[j][k];
    }
    const double norm = std::sqrt(std::inner_product(q[i].begin(), q[i].end(), q[i].begin(), 0.0));
    for (auto& v : q[i]) v /= norm;
  }
  return q;
}

/// Permutation matrix with random signs; orthogonal and exact in floating point.
inline Rows random_signed_permutation(std::size_t d, Rng& rng) {
  std::vector<std::size_t> perm(d);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(perm));
  Rows q(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < d; ++i) q[i][perm[i]] = rng.index(2) == 0 ? 1.0 : -1.0;
  return q;
}

inline Rows transform(const Rows& rows, const Rows& q) {
  Rows out(rows.size(), std::vector<double>(q.size(), 0.0));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      for (std::size_t k = 0; k < q.size(); ++k) out[r][i] += q[i][k] * rows[r][k];
    }
  }
  return out;
}

struct CmcInstance {
  Rows probes, gallery;
  std::vector<int> probe_ids, gallery_ids;
};

/// Gallery ids are a shuffled 1..n; probes are noisy copies of gallery rows.
/// Half the instances are rounded to integers so exact distance ties occur.
inline CmcInstance random_instance(Rng& rng, std::size_t max_ids = 50, std::size_t max_probes = 50) {
  CmcInstance inst;
  const std::size_t ids = 2 + rng.index(max_ids - 1);
  const std::size_t probes = 1 + rng.index(max_probes);
  const std::size_t d = 1 + rng.index(6);
  const bool coarse = rng.index(2) == 0;
  inst.gallery = random_rows(ids, d, rng);
  inst.gallery_ids.resize(ids);
  std::iota(inst.gallery_ids.begin(), inst.gallery_ids.end(), 1);
  rng.shuffle(std::span<int>(inst.gallery_ids));
  for (std::size_t p = 0; p < probes; ++p) {
    const std::size_t g = rng.index(ids);
    std::vector<double> row = inst.gallery[g];
    for (auto& v : row) v += rng.normal() * 0.8;
    inst.probes.push_back(row);
    inst.probe_ids.push_back(inst.gallery_ids[g]);
  }
  if (coarse) {
    for (auto* rows : {&inst.probes, &inst.gallery}) {
      for (auto& r : *rows) {
        for (auto& v : r) v = std::round(v);
      }
    }
  }
  return inst;
}

/// True when some probe sees two gallery rows at (nearly) equal distance.
inline bool has_distance_ties(const CmcInstance& inst, double eps = 1e-9) {
  for (const auto& p : inst.probes) {
    std::vector<double> dist;
    for (const auto& g : inst.gallery) {
      double acc = 0.0;
      for (std::size_t c = 0; c < p.size(); ++c) acc += (p[c] - g[c]) * (p[c] - g[c]);
      dist.push_back(acc);
    }
    std::sort(dist.begin(), dist.end());
    for (std::size_t j = 1; j < dist.size(); ++j) {
      if (dist[j] - dist[j - 1] < eps) return true;
    }
  }
  return false;
}

}  // namespace dgd::testing
