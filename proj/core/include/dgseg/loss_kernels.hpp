#pragma once

// Precision-generic loss kernels. The public losses API instantiates them with
// double; gradient tests instantiate them with long double.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace dgseg::kernels {

enum class CentroidNorm { kL1, kL2 };

struct CosineOptions {
  /// Include each feature's own class centroid (the literal double sum).
  bool all_pairs = false;
  /// Penalize |cos| so that the minimum is orthogonality rather than -1.
  bool absolute = false;
  CentroidNorm centroid_norm = CentroidNorm::kL1;
};

/// Supervised contrastive loss over n features of dimension d (row-major).
/// `grad`, if non-null, receives dL/dz (n*d values, overwritten).
template <class T>
T supcon(const T* z, std::size_t n, int d, const int* cls, T tau, bool mean_of_logs, bool mean_reduction,
         T* grad) {
  if (grad)
    for (std::size_t k = 0; k < n * d; ++k) grad[k] = T(0);
  std::vector<T> s(n), e(n), g(n);
  T total = T(0);
  std::size_t anchors = 0;
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t positives = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && cls[j] == cls[i]) ++positives;
    if (positives == 0) continue;
    ++anchors;
    active.push_back(i);
  }
  for (std::size_t i : active) {
    const T* zi = z + i * d;
    T m = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const T* zj = z + j * d;
      T dot = T(0);
      for (int k = 0; k < d; ++k) dot += zi[k] * zj[k];
      s[j] = dot / tau;
      if (s[j] > m) m = s[j];
    }
    T sum_n = T(0), sum_m = T(0);
    std::size_t positives = 0;
    T pos_logits = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      e[j] = std::exp(s[j] - m);
      sum_n += e[j];
      if (cls[j] == cls[i]) {
        sum_m += e[j];
        pos_logits += s[j] - m;
        ++positives;
      }
    }
    const T pm = static_cast<T>(positives);
    T loss_i;
    if (mean_of_logs)
      loss_i = std::log(sum_n) - pos_logits / pm;
    else
      loss_i = std::log(sum_n) - std::log(sum_m) + std::log(pm);
    total += loss_i;
    if (!grad) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) {
        g[j] = T(0);
        continue;
      }
      g[j] = e[j] / sum_n;
      if (cls[j] == cls[i]) g[j] -= mean_of_logs ? T(1) / pm : e[j] / sum_m;
    }
    T* gi = grad + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || g[j] == T(0)) continue;
      const T c = g[j] / tau;
      const T* zj = z + j * d;
      T* gj = grad + j * d;
      for (int k = 0; k < d; ++k) {
        gi[k] += c * zj[k];
        gj[k] += c * zi[k];
      }
    }
  }
  if (mean_reduction && anchors > 0) {
    const T inv = T(1) / static_cast<T>(anchors);
    total *= inv;
    if (grad)
      for (std::size_t k = 0; k < n * d; ++k) grad[k] *= inv;
  }
  return total;
}

/// Class centroids of normalized features. Classes are indexed by position in
/// `classes` (ascending ids present in `cls`). Returns per-centroid member
/// counts; features whose normalizer is zero are excluded and counted.
template <class T>
void centroids(const T* z, std::size_t n, int d, const int* cls, CentroidNorm norm, std::vector<int>& classes,
               std::vector<T>& out, std::vector<int>& counts, int* excluded) {
  classes.clear();
  for (std::size_t i = 0; i < n; ++i) {
    bool seen = false;
    for (int c : classes) seen = seen || c == cls[i];
    if (!seen) classes.push_back(cls[i]);
  }
  for (std::size_t a = 1; a < classes.size(); ++a)
    for (std::size_t b = a; b > 0 && classes[b - 1] > classes[b]; --b) std::swap(classes[b - 1], classes[b]);
  out.assign(classes.size() * d, T(0));
  counts.assign(classes.size(), 0);
  int skipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* zi = z + i * d;
    T nrm = T(0);
    for (int k = 0; k < d; ++k) nrm += norm == CentroidNorm::kL1 ? std::abs(zi[k]) : zi[k] * zi[k];
    if (norm == CentroidNorm::kL2) nrm = std::sqrt(nrm);
    if (!(nrm > T(0))) {
      ++skipped;
      continue;
    }
    std::size_t j = 0;
    while (classes[j] != cls[i]) ++j;
    for (int k = 0; k < d; ++k) out[j * d + k] += zi[k] / nrm;
    ++counts[j];
  }
  for (std::size_t j = 0; j < classes.size(); ++j)
    if (counts[j] > 0)
      for (int k = 0; k < d; ++k) out[j * d + k] /= static_cast<T>(counts[j]);
  if (excluded) *excluded = skipped;
}

/// Sum of cosine similarities between class centroids and features. With
/// `grad`, centroids are recomputed from z and gradients flow through them.
template <class T>
T cosine_separation(const T* z, std::size_t n, int d, const int* cls, const std::vector<int>& classes,
                    const std::vector<T>& cent, const CosineOptions& opt, int* skipped_pairs) {
  T total = T(0);
  int skipped = 0;
  for (std::size_t j = 0; j < classes.size(); ++j) {
    const T* c = cent.data() + j * d;
    T cn = T(0);
    for (int k = 0; k < d; ++k) cn += c[k] * c[k];
    cn = std::sqrt(cn);
    for (std::size_t i = 0; i < n; ++i) {
      if (!opt.all_pairs && cls[i] == classes[j]) continue;
      const T* zi = z + i * d;
      T zn = T(0), dot = T(0);
      for (int k = 0; k < d; ++k) {
        zn += zi[k] * zi[k];
        dot += zi[k] * c[k];
      }
      zn = std::sqrt(zn);
      if (!(cn > T(0)) || !(zn > T(0))) {
        ++skipped;
        continue;
      }
      const T cosv = dot / (cn * zn);
      total += opt.absolute ? std::abs(cosv) : cosv;
    }
  }
  if (skipped_pairs) *skipped_pairs = skipped;
  return total;
}

template <class T>
T cosine_separation_grad(const T* z, std::size_t n, int d, const int* cls, const CosineOptions& opt, T* grad) {
  std::vector<int> classes, counts;
  std::vector<T> cent;
  centroids(z, n, d, cls, opt.centroid_norm, classes, cent, counts, static_cast<int*>(nullptr));
  for (std::size_t k = 0; k < n * d; ++k) grad[k] = T(0);
  std::vector<T> dcent(cent.size(), T(0));
  T total = T(0);
  for (std::size_t j = 0; j < classes.size(); ++j) {
    const T* c = cent.data() + j * d;
    T cn = T(0);
    for (int k = 0; k < d; ++k) cn += c[k] * c[k];
    cn = std::sqrt(cn);
    if (!(cn > T(0))) continue;
    for (std::size_t i = 0; i < n; ++i) {
      if (!opt.all_pairs && cls[i] == classes[j]) continue;
      const T* zi = z + i * d;
      T zn = T(0), dot = T(0);
      for (int k = 0; k < d; ++k) {
        zn += zi[k] * zi[k];
        dot += zi[k] * c[k];
      }
      zn = std::sqrt(zn);
      if (!(zn > T(0))) continue;
      const T cosv = dot / (cn * zn);
      T sgn = T(1);
      if (opt.absolute) sgn = cosv > T(0) ? T(1) : (cosv < T(0) ? T(-1) : T(0));
      total += sgn * cosv;
      const T inv = T(1) / (cn * zn);
      for (int k = 0; k < d; ++k) {
        grad[i * d + k] += sgn * (c[k] * inv - cosv * zi[k] / (zn * zn));
        dcent[j * d + k] += sgn * (zi[k] * inv - cosv * c[k] / (cn * cn));
      }
    }
  }
  // Back through the per-class mean of normalized features.
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = 0;
    while (classes[j] != cls[i]) ++j;
    const T* zi = z + i * d;
    const T* v = dcent.data() + j * d;
    if (opt.centroid_norm == CentroidNorm::kL1) {
      T l1 = T(0), zv = T(0);
      for (int k = 0; k < d; ++k) {
        l1 += std::abs(zi[k]);
        zv += zi[k] * v[k];
      }
      if (!(l1 > T(0))) continue;
      const T w = T(1) / static_cast<T>(counts[j]);
      for (int k = 0; k < d; ++k) {
        const T sg = zi[k] > T(0) ? T(1) : (zi[k] < T(0) ? T(-1) : T(0));
        grad[i * d + k] += w * (v[k] / l1 - sg * zv / (l1 * l1));
      }
    } else {
      T l2 = T(0), zv = T(0);
      for (int k = 0; k < d; ++k) {
        l2 += zi[k] * zi[k];
        zv += zi[k] * v[k];
      }
      l2 = std::sqrt(l2);
      if (!(l2 > T(0))) continue;
      const T w = T(1) / static_cast<T>(counts[j]);
      for (int k = 0; k < d; ++k) grad[i * d + k] += w * (v[k] / l2 - zi[k] * zv / (l2 * l2 * l2));
    }
  }
  return total;
}

/// Mean per-pixel cross-entropy over non-ignored pixels. Logits are planar:
/// logits[c * npix + p]. `grad`, if non-null, receives d(mean)/dlogits. The
/// number of scored pixels is written to `counted`.
template <class T>
T cross_entropy(const T* logits, int num_classes, std::size_t npix, const std::uint8_t* label,
                std::uint8_t ignore, T* grad, std::size_t* counted) {
  std::size_t count = 0;
  for (std::size_t p = 0; p < npix; ++p)
    if (label[p] != ignore) ++count;
  if (grad)
    for (std::size_t k = 0; k < npix * num_classes; ++k) grad[k] = T(0);
  if (counted) *counted = count;
  if (count == 0) return T(0);
  const T inv = T(1) / static_cast<T>(count);
  T total = T(0);
  for (std::size_t p = 0; p < npix; ++p) {
    if (label[p] == ignore) continue;
    T m = logits[p];
    for (int c = 1; c < num_classes; ++c) m = std::max(m, logits[c * npix + p]);
    T sum = T(0);
    for (int c = 0; c < num_classes; ++c) sum += std::exp(logits[c * npix + p] - m);
    const T lse = m + std::log(sum);
    total += lse - logits[label[p] * npix + p];
    if (grad) {
      for (int c = 0; c < num_classes; ++c) grad[c * npix + p] = std::exp(logits[c * npix + p] - lse) * inv;
      grad[label[p] * npix + p] -= inv;
    }
  }
  return total * inv;
}

}  // namespace dgseg::kernels
