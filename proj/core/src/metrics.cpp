#include "dgseg/metrics.hpp"

#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

#include "dgseg/dataset.hpp"
#include "dgseg/error.hpp"
#include "dgseg/model.hpp"
#include "dgseg/parallel.hpp"

namespace dgseg {

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

void ConfusionMatrix::accumulate(const LabelMap& gt, const LabelMap& pred) {
  if (gt.height() != pred.height() || gt.width() != pred.width())
    throw Error("confusion: prediction and ground truth differ in size");
  const auto g = gt.data();
  const auto p = pred.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] == kIgnore) continue;
    if (g[i] >= c_ || p[i] >= c_) throw DataError("confusion: class id out of range");
    ++at(g[i], p[i]);
  }
}

ConfusionMatrix merge_confusion(const ConfusionMatrix& a, const ConfusionMatrix& b) {
  if (a.num_classes() != b.num_classes())
    throw Error("merge_confusion: class counts differ (" + std::to_string(a.num_classes()) + " vs " +
                std::to_string(b.num_classes()) + ")");
  ConfusionMatrix out = a;
  for (int i = 0; i < a.num_classes(); ++i)
    for (int j = 0; j < a.num_classes(); ++j) out.at(i, j) += b.at(i, j);
  return out;
}

EvalReport make_report(const ConfusionMatrix& cm, std::vector<std::string> class_names,
                       const std::optional<std::vector<int>>& eval_subset) {
  const int c = cm.num_classes();
  EvalReport r;
  r.confusion = cm;
  r.class_names = std::move(class_names);
  r.class_names.resize(c);
  for (int k = 0; k < c; ++k)
    if (r.class_names[k].empty()) r.class_names[k] = "class" + std::to_string(k);
  r.iou.resize(c);
  r.scored_pixels = cm.total();
  for (int k = 0; k < c; ++k) {
    std::uint64_t tp = cm.at(k, k), fp = 0, fn = 0;
    for (int j = 0; j < c; ++j) {
      if (j == k) continue;
      fp += cm.at(j, k);
      fn += cm.at(k, j);
    }
    const std::uint64_t denom = tp + fp + fn;
    if (denom > 0) r.iou[k] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  auto mean_over = [&](const std::vector<int>& ids) {
    double s = 0.0;
    int n = 0;
    for (int k : ids)
      if (r.iou[k]) {
        s += *r.iou[k];
        ++n;
      }
    return n ? s / n : 0.0;
  };
  std::vector<int> all(c);
  std::iota(all.begin(), all.end(), 0);
  r.miou = mean_over(all);
  r.eval_subset = eval_subset;
  if (eval_subset) {
    for (int k : *eval_subset)
      if (k < 0 || k >= c) throw ConfigError("eval_subset contains out-of-range class " + std::to_string(k));
  }
  r.miou_subset = mean_over(eval_subset ? *eval_subset : all);
  return r;
}

LabelMap argmax_labels(const nn::Tensor& logits, int n) {
  LabelMap out(logits.h(), logits.w());
  const std::size_t np = logits.plane();
  for (std::size_t p = 0; p < np; ++p) {
    int best = 0;
    float bv = logits.plane_ptr(n, 0)[p];
    for (int c = 1; c < logits.c(); ++c) {
      const float v = logits.plane_ptr(n, c)[p];
      if (v > bv) {
        bv = v;
        best = c;
      }
    }
    out.data()[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

namespace {

LabelMap predict(const SegModel& model, const Image& img) {
  const int s = model.config().output_stride;
  const int h = img.height(), w = img.width();
  const int ph = (h + s - 1) / s * s, pw = (w + s - 1) / s * s;
  nn::Tensor x(1, 3, ph, pw);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < ph; ++y)
      for (int xx = 0; xx < pw; ++xx) x.at(0, c, y, xx) = img.at(c, std::min(y, h - 1), std::min(xx, w - 1));
  const LabelMap full = argmax_labels(model.infer(x).logits, 0);
  return ph == h && pw == w ? full : crop(full, 0, 0, h, w);
}

}  // namespace

EvalReport evaluate(const SegModel& model, const DatasetManifest& manifest, int workers) {
  if (manifest.size() == 0) throw Error("evaluate: empty manifest");
  if (model.config().num_classes != manifest.num_classes)
    throw ConfigError("evaluate: model has " + std::to_string(model.config().num_classes) +
                      " classes but the dataset has " + std::to_string(manifest.num_classes));
  std::vector<ConfusionMatrix> parts(manifest.size(), ConfusionMatrix(manifest.num_classes));
  parallel_for(manifest.size(), static_cast<std::size_t>(std::max(1, workers)), [&](std::size_t i) {
    const Sample s = load_sample(manifest, i);
    parts[i].accumulate(s.label, predict(model, s.image));
  });
  ConfusionMatrix total(manifest.num_classes);
  for (const auto& p : parts) total = merge_confusion(total, p);
  return make_report(total, manifest.class_names, manifest.eval_subset);
}

std::string format_report(const EvalReport& r) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-4s %-20s %8s\n", "id", "class", "IoU");
  out += buf;
  for (std::size_t k = 0; k < r.iou.size(); ++k) {
    if (r.iou[k])
      std::snprintf(buf, sizeof buf, "%-4zu %-20s %8.2f\n", k, r.class_names[k].c_str(), 100.0 * *r.iou[k]);
    else
      std::snprintf(buf, sizeof buf, "%-4zu %-20s %8s\n", k, r.class_names[k].c_str(), "-");
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%-25s %8.2f\n", "mIoU", 100.0 * r.miou);
  out += buf;
  std::snprintf(buf, sizeof buf, "%-25s %8.2f\n", "mIoU*", 100.0 * r.miou_subset);
  out += buf;
  std::snprintf(buf, sizeof buf, "%-25s %8llu\n", "scored pixels", static_cast<unsigned long long>(r.scored_pixels));
  out += buf;
  return out;
}

std::string report_json(const EvalReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t k = 0; k < r.iou.size(); ++k) {
    nlohmann::json row{{"id", k}, {"name", r.class_names[k]}};
    row["iou"] = r.iou[k] ? nlohmann::json(*r.iou[k]) : nlohmann::json(nullptr);
    classes.push_back(row);
  }
  nlohmann::json conf = nlohmann::json::array();
  for (int i = 0; i < r.confusion.num_classes(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < r.confusion.num_classes(); ++j) row.push_back(r.confusion.at(i, j));
    conf.push_back(row);
  }
  nlohmann::json j{{"classes", classes},
                   {"miou", r.miou},
                   {"miou_subset", r.miou_subset},
                   {"scored_pixels", r.scored_pixels},
                   {"confusion", conf}};
  j["eval_subset"] = r.eval_subset ? nlohmann::json(*r.eval_subset) : nlohmann::json(nullptr);
  return j.dump(2);
}

}  // namespace dgseg
