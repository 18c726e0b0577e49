#include "dgseg/losses.hpp"

#include <algorithm>
#include <cmath>

#include "dgseg/error.hpp"

namespace dgseg {

namespace {

void normalize_row(const double* in, double* out, int d, double& norm) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += in[k] * in[k];
  norm = std::sqrt(s);
  for (int k = 0; k < d; ++k) out[k] = in[k] / norm;
}

bool push_feature(PixelFeatureSet& set, const double* v, int cls, PixelLocation loc) {
  const int d = set.dim;
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += v[k] * v[k];
  if (!(s > 0.0) || !std::isfinite(s)) {
    ++set.zero_norm_dropped;
    return false;
  }
  const std::size_t off = set.raw.size();
  set.raw.insert(set.raw.end(), v, v + d);
  set.features.resize(off + d);
  double norm;
  normalize_row(v, set.features.data() + off, d, norm);
  set.class_ids.push_back(cls);
  set.locations.push_back(loc);
  return true;
}

}  // namespace

PixelFeatureSet make_feature_set(std::span<const std::vector<double>> vectors, std::span<const int> classes) {
  if (vectors.size() != classes.size()) throw Error("make_feature_set: vectors and classes differ in length");
  PixelFeatureSet set;
  set.dim = vectors.empty() ? 0 : static_cast<int>(vectors[0].size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (static_cast<int>(vectors[i].size()) != set.dim) throw Error("make_feature_set: inconsistent dimensions");
    if (classes[i] < 0 || classes[i] == kIgnore) throw Error("make_feature_set: invalid class id");
    push_feature(set, vectors[i].data(), classes[i], {0, static_cast<int>(i), 0});
  }
  return set;
}

PixelFeatureSet sample_pixel_features(const nn::Tensor& features, std::span<const LabelMap> labels,
                                      int per_class_cap, Rng& rng, int num_classes) {
  if (per_class_cap < 1) throw ConfigError("per-class feature cap must be >= 1");
  if (static_cast<int>(labels.size()) != features.n())
    throw Error("sample_pixel_features: " + std::to_string(labels.size()) + " labels for batch of " +
                std::to_string(features.n()));
  PixelFeatureSet set;
  set.dim = features.c();
  const int h = features.h(), w = features.w(), d = features.c();
  std::vector<double> v(d);
  for (int b = 0; b < features.n(); ++b) {
    const LabelMap& lab = labels[b];
    std::vector<std::vector<int>> cells(num_classes);
    for (int y = 0; y < h; ++y) {
      const int ly = std::min(lab.height() - 1, static_cast<int>((y + 0.5) * lab.height() / h));
      for (int x = 0; x < w; ++x) {
        const int lx = std::min(lab.width() - 1, static_cast<int>((x + 0.5) * lab.width() / w));
        const int c = lab.at(ly, lx);
        if (c == kIgnore) continue;
        if (c >= num_classes) throw DataError("label value " + std::to_string(c) + " exceeds class count");
        cells[c].push_back(y * w + x);
      }
    }
    for (int c = 0; c < num_classes; ++c) {
      auto& idx = cells[c];
      if (static_cast<int>(idx.size()) > per_class_cap) {
        // Partial Fisher-Yates: the first `cap` slots form a uniform subset.
        for (int k = 0; k < per_class_cap; ++k) {
          const auto j = k + static_cast<std::size_t>(rng.uniform_int(idx.size() - k));
          std::swap(idx[k], idx[j]);
        }
        idx.resize(per_class_cap);
        std::sort(idx.begin(), idx.end());
      }
      for (int cell : idx) {
        const int y = cell / w, x = cell % w;
        for (int k = 0; k < d; ++k) v[k] = features.at(b, k, y, x);
        push_feature(set, v.data(), c, {b, y, x});
      }
    }
  }
  return set;
}

PixelFeatureSet concat(const PixelFeatureSet& a, const PixelFeatureSet& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.dim != b.dim) throw Error("concat: feature dimensions differ");
  PixelFeatureSet out = a;
  out.raw.insert(out.raw.end(), b.raw.begin(), b.raw.end());
  out.features.insert(out.features.end(), b.features.begin(), b.features.end());
  out.class_ids.insert(out.class_ids.end(), b.class_ids.begin(), b.class_ids.end());
  out.locations.insert(out.locations.end(), b.locations.begin(), b.locations.end());
  out.zero_norm_dropped += b.zero_norm_dropped;
  return out;
}

double supcon_loss(const PixelFeatureSet& set, const SupConOptions& opt) {
  if (!(opt.temperature > 0.0)) throw ConfigError("supcon temperature must be > 0");
  return kernels::supcon<double>(set.features.data(), set.size(), set.dim, set.class_ids.data(), opt.temperature,
                                 opt.mean_of_logs, opt.mean_reduction, nullptr);
}

double supcon_loss_grad(const PixelFeatureSet& set, const SupConOptions& opt, std::vector<double>& dz) {
  if (!(opt.temperature > 0.0)) throw ConfigError("supcon temperature must be > 0");
  dz.assign(set.features.size(), 0.0);
  return kernels::supcon<double>(set.features.data(), set.size(), set.dim, set.class_ids.data(), opt.temperature,
                                 opt.mean_of_logs, opt.mean_reduction, dz.data());
}

CentroidSet class_centroids(const PixelFeatureSet& set, CentroidNorm norm) {
  CentroidSet out;
  out.dim = set.dim;
  kernels::centroids<double>(set.features.data(), set.size(), set.dim, set.class_ids.data(), norm, out.classes,
                             out.centroids, out.counts, &out.excluded);
  // Drop classes whose every member was excluded.
  for (std::size_t j = out.classes.size(); j-- > 0;) {
    if (out.counts[j] > 0) continue;
    out.classes.erase(out.classes.begin() + j);
    out.counts.erase(out.counts.begin() + j);
    out.centroids.erase(out.centroids.begin() + j * set.dim, out.centroids.begin() + (j + 1) * set.dim);
  }
  return out;
}

double cosine_separation_loss(const PixelFeatureSet& set, const CentroidSet& centroids, const CosineOptions& opt,
                              int* skipped_pairs) {
  if (!centroids.classes.empty() && centroids.dim != set.dim)
    throw Error("cosine_separation_loss: centroid and feature dimensions differ");
  return kernels::cosine_separation<double>(set.features.data(), set.size(), set.dim, set.class_ids.data(),
                                            centroids.classes, centroids.centroids, opt, skipped_pairs);
}

double cosine_separation_loss_grad(const PixelFeatureSet& set, const CosineOptions& opt, std::vector<double>& dz) {
  dz.assign(set.features.size(), 0.0);
  if (set.empty()) return 0.0;
  return kernels::cosine_separation_grad<double>(set.features.data(), set.size(), set.dim, set.class_ids.data(), opt,
                                                 dz.data());
}

double classification_loss(const nn::Tensor& logits, std::span<const LabelMap> labels, nn::Tensor* grad) {
  if (static_cast<int>(labels.size()) != logits.n())
    throw Error("classification_loss: label count does not match batch size");
  const int c = logits.c();
  const std::size_t npix = logits.plane();
  std::size_t total_count = 0;
  for (const auto& lab : labels) {
    if (lab.height() != logits.h() || lab.width() != logits.w())
      throw Error("classification_loss: logits " + logits.shape_string() + " do not match label size");
    for (auto v : lab.data())
      if (v != kIgnore) {
        if (v >= c) throw DataError("label value " + std::to_string(v) + " exceeds class count");
        ++total_count;
      }
  }
  if (grad) *grad = nn::Tensor(logits.n(), c, logits.h(), logits.w());
  if (total_count == 0) return 0.0;
  std::vector<double> lg(npix * c), gr;
  double sum = 0.0;
  for (int b = 0; b < logits.n(); ++b) {
    const float* src = logits.item_ptr(b);
    for (std::size_t k = 0; k < lg.size(); ++k) lg[k] = src[k];
    if (grad) gr.assign(lg.size(), 0.0);
    std::size_t counted = 0;
    const double mean = kernels::cross_entropy<double>(lg.data(), c, npix, labels[b].data().data(), kIgnore,
                                                       grad ? gr.data() : nullptr, &counted);
    if (counted == 0) continue;
    // Re-weight the per-item mean into the batch mean.
    const double wgt = static_cast<double>(counted) / static_cast<double>(total_count);
    sum += mean * wgt;
    if (grad) {
      float* dst = grad->item_ptr(b);
      for (std::size_t k = 0; k < gr.size(); ++k) dst[k] = static_cast<float>(gr[k] * wgt);
    }
  }
  return sum;
}

void accumulate_feature_grad(const PixelFeatureSet& set, std::span<const double> dz, double scale,
                             nn::Tensor& dfeatures) {
  const int d = set.dim;
  if (dz.size() != set.features.size()) throw Error("accumulate_feature_grad: gradient size mismatch");
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double* z = set.features.data() + i * d;
    const double* r = set.raw.data() + i * d;
    const double* g = dz.data() + i * d;
    double rn = 0.0, zg = 0.0;
    for (int k = 0; k < d; ++k) {
      rn += r[k] * r[k];
      zg += z[k] * g[k];
    }
    rn = std::sqrt(rn);
    const auto& loc = set.locations[i];
    for (int k = 0; k < d; ++k)
      dfeatures.at(loc.batch, k, loc.y, loc.x) += static_cast<float>(scale * (g[k] - z[k] * zg) / rn);
  }
}

void validate(const LossWeights& w) {
  if (w.supcon < 0 || w.cosine < 0 || w.ce < 0) throw ConfigError("loss weights must be >= 0");
  if (!(w.temperature > 0)) throw ConfigError("loss temperature must be > 0");
}

LossTotal total_loss(const LossComponents& c, const LossWeights& w) {
  if (!std::isfinite(c.ce)) throw DivergenceError("non-finite classification loss (ce = " + std::to_string(c.ce) + ")");
  if (!std::isfinite(c.supcon))
    throw DivergenceError("non-finite supcon loss (supcon = " + std::to_string(c.supcon) + ")");
  if (!std::isfinite(c.cosine))
    throw DivergenceError("non-finite cosine loss (cosine = " + std::to_string(c.cosine) + ")");
  LossTotal t;
  t.components = c;
  t.total = w.supcon * c.supcon + w.cosine * c.cosine + w.ce * c.ce;
  return t;
}

}  // namespace dgseg
