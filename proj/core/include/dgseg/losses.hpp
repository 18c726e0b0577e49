#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dgseg/image.hpp"
#include "dgseg/loss_kernels.hpp"
#include "dgseg/nn/tensor.hpp"
#include "dgseg/rng.hpp"

namespace dgseg {

using kernels::CentroidNorm;
using kernels::CosineOptions;

struct PixelLocation {
  int batch = 0;
  int y = 0;
  int x = 0;
};

/// Class-tagged pixel embeddings. `features` holds unit-L2 rows; `raw` keeps
/// the pre-normalization vectors so gradients can be carried back to the
/// feature map.
struct PixelFeatureSet {
  int dim = 0;
  std::vector<double> raw;
  std::vector<double> features;
  std::vector<int> class_ids;
  std::vector<PixelLocation> locations;
  /// Candidates dropped because their raw vector had zero norm.
  int zero_norm_dropped = 0;

  std::size_t size() const noexcept { return class_ids.size(); }
  bool empty() const noexcept { return class_ids.empty(); }
  std::span<const double> feature(std::size_t i) const { return {features.data() + i * dim, std::size_t(dim)}; }
};

/// Builds a set from explicit vectors (normalizing each).
PixelFeatureSet make_feature_set(std::span<const std::vector<double>> vectors, std::span<const int> classes);

/// Samples at most `per_class_cap` features per class per batch item.
/// Labels are reduced to the feature grid by nearest-neighbour lookup at cell
/// centres; ignored pixels never contribute.
PixelFeatureSet sample_pixel_features(const nn::Tensor& features, std::span<const LabelMap> labels,
                                      int per_class_cap, Rng& rng, int num_classes);

/// Concatenates two sets (locations are kept as given).
PixelFeatureSet concat(const PixelFeatureSet& a, const PixelFeatureSet& b);

struct SupConOptions {
  double temperature = 0.07;
  /// Mean of per-positive logs instead of log of the positive mean.
  bool mean_of_logs = false;
  /// Divide by the number of valid anchors.
  bool mean_reduction = false;
};

double supcon_loss(const PixelFeatureSet& set, const SupConOptions& opt = {});
/// Loss and dL/dz for the normalized features (size() * dim values).
double supcon_loss_grad(const PixelFeatureSet& set, const SupConOptions& opt, std::vector<double>& dz);

struct CentroidSet {
  int dim = 0;
  std::vector<int> classes;
  std::vector<double> centroids;  // classes.size() x dim
  std::vector<int> counts;
  /// Features excluded because their normalizer was zero.
  int excluded = 0;

  std::span<const double> centroid(std::size_t j) const { return {centroids.data() + j * dim, std::size_t(dim)}; }
};

CentroidSet class_centroids(const PixelFeatureSet& set, CentroidNorm norm = CentroidNorm::kL1);

double cosine_separation_loss(const PixelFeatureSet& set, const CentroidSet& centroids, const CosineOptions& opt = {},
                              int* skipped_pairs = nullptr);
/// Loss with centroids derived from `set`; gradients flow through the centroids.
double cosine_separation_loss_grad(const PixelFeatureSet& set, const CosineOptions& opt, std::vector<double>& dz);

/// Mean cross-entropy over non-ignored pixels of all batch items. `grad`, if
/// given, is resized to the logits shape and receives d(loss)/d(logits).
double classification_loss(const nn::Tensor& logits, std::span<const LabelMap> labels, nn::Tensor* grad = nullptr);

/// Carries dL/dz back through the L2 normalization and scatters it into a
/// tensor shaped like the sampled feature map (accumulating).
void accumulate_feature_grad(const PixelFeatureSet& set, std::span<const double> dz, double scale,
                             nn::Tensor& dfeatures);

struct LossWeights {
  double supcon = 1.0;
  double cosine = 1.0;
  double ce = 1.0;
  double temperature = 0.07;
};

void validate(const LossWeights& w);

struct LossComponents {
  double ce = 0.0;
  double supcon = 0.0;
  double cosine = 0.0;
};

struct LossTotal {
  LossComponents components;
  double total = 0.0;
};

/// Weighted sum. Throws DivergenceError naming the first non-finite component.
LossTotal total_loss(const LossComponents& c, const LossWeights& w);

}  // namespace dgseg
