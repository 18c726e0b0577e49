#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dgseg/image.hpp"
#include "dgseg/nn/tensor.hpp"

namespace dgseg {

struct DatasetManifest;
class SegModel;

/// C x C pixel counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int num_classes)
      : c_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {}

  int num_classes() const noexcept { return c_; }
  std::uint64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * c_ + pred]; }
  std::uint64_t& at(int gt, int pred) { return counts_[static_cast<std::size_t>(gt) * c_ + pred]; }
  std::uint64_t total() const;

  /// Ignored ground-truth pixels are skipped. Throws on size mismatch or an
  /// out-of-range id.
  void accumulate(const LabelMap& gt, const LabelMap& pred);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  int c_ = 0;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix merge_confusion(const ConfusionMatrix& a, const ConfusionMatrix& b);

struct EvalReport {
  ConfusionMatrix confusion;
  std::vector<std::string> class_names;
  /// Empty when the class is absent from both ground truth and prediction.
  std::vector<std::optional<double>> iou;
  double miou = 0.0;
  std::optional<std::vector<int>> eval_subset;
  double miou_subset = 0.0;
  std::uint64_t scored_pixels = 0;
};

EvalReport make_report(const ConfusionMatrix& cm, std::vector<std::string> class_names,
                       const std::optional<std::vector<int>>& eval_subset);

/// Per-pixel argmax over the class axis of item `n`; ties go to the lowest id.
LabelMap argmax_labels(const nn::Tensor& logits, int n);

/// Accumulates one global confusion matrix over the manifest using inference
/// mode. Images whose size is not a multiple of the output stride are padded
/// by edge replication and the prediction cropped back.
EvalReport evaluate(const SegModel& model, const DatasetManifest& manifest, int workers = 1);

/// Plain-text table: one row per class, then mIoU and mIoU*.
std::string format_report(const EvalReport& r);
/// Structured form of the same report.
std::string report_json(const EvalReport& r);

}  // namespace dgseg
