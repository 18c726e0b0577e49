#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dgseg/image.hpp"

namespace dgseg {

/// Raw label id -> train id. Ids absent from the table map to kIgnore.
using RemapTable = std::map<int, int>;

/// One entry of a manifest. Either backed by files on disk or by an in-memory
/// sample (generated data); `load_sample` resolves both.
struct SampleRecord {
  std::string id;
  std::string domain_tag;
  std::filesystem::path image_path;
  std::filesystem::path label_path;
  std::filesystem::path instances_path;  // empty if none
  std::shared_ptr<const Sample> data;

  /// Identity used when comparing record lists (paths and payload excluded).
  friend bool same_identity(const SampleRecord& a, const SampleRecord& b) {
    return a.id == b.id && a.domain_tag == b.domain_tag;
  }
};

struct DatasetManifest {
  std::vector<SampleRecord> records;
  int num_classes = 0;
  std::vector<std::string> class_names;
  std::uint8_t ignore_value = kIgnore;
  std::optional<std::vector<int>> eval_subset;
  /// Applied to raw label files on load (cityscapes-like data only).
  std::optional<RemapTable> remap;
  /// Pairs skipped during discovery because the label file was missing.
  int missing_label_count = 0;

  std::size_t size() const noexcept { return records.size(); }
};

/// Throws ConfigError when the manifest violates its invariants.
void validate_manifest(const DatasetManifest& m);

enum class DatasetFormat { kCityscapesLike, kToy };

DatasetFormat parse_dataset_format(const std::string& s);

struct LoadOptions {
  std::string split = "train";
  /// Cityscapes-like: number of train classes after remap (required).
  int num_classes = 19;
  std::vector<std::string> class_names;
  std::optional<RemapTable> remap;
  std::optional<std::vector<int>> eval_subset;
  /// Skip reading every image header for the dimension check.
  bool check_dimensions = true;
};

/// Discover (image, label) pairs under `root` per the on-disk layout:
///   <root>/images/<split>/<stem>.png, <root>/labels/<split>/<stem>.png,
///   optional <root>/instances/<split>/<stem>.json.
/// A toy dataset additionally carries <root>/dataset.json with class
/// metadata.
DatasetManifest load_manifest(const std::filesystem::path& root, DatasetFormat format,
                              const LoadOptions& opts = {});

/// Materialize record `index`, applying the manifest's remap table.
Sample load_sample(const DatasetManifest& m, std::size_t index);

LabelMap remap_labels(const LabelMap& raw, const RemapTable& table);

/// Compose two remap tables: result(x) = second(first(x)).
RemapTable compose(const RemapTable& first, const RemapTable& second);

/// Reads a JSON object {"<raw id>": <train id>, ...}.
RemapTable load_remap_table(const std::filesystem::path& path);

/// The standard 34 -> 19 Cityscapes label-id mapping.
RemapTable cityscapes_remap_table();
std::vector<std::string> cityscapes_class_names();

inline constexpr int kDefaultMinInstanceArea = 16;

/// One mask per 4-connected component of each class in `thing_classes`;
/// components with area < `min_area` are discarded. Output order: by class
/// id, then by the raster position of each component's first pixel.
std::vector<InstanceMask> extract_instances(const LabelMap& label, const std::set<int>& thing_classes,
                                            int min_area = kDefaultMinInstanceArea);

/// Run-length encoding of a binary mask in row-major order: alternating run
/// lengths starting with a run of zeros (possibly of length 0).
std::vector<std::uint32_t> rle_encode(const std::vector<std::uint8_t>& mask);
std::vector<std::uint8_t> rle_decode(const std::vector<std::uint32_t>& runs, std::size_t length);

/// Write every record of `m` into the on-disk layout under `root/split`.
/// Also writes root/dataset.json with the class metadata.
void write_dataset(const std::filesystem::path& root, const std::string& split, const DatasetManifest& m);

/// Serialized record identities, one JSON object per record.
std::string record_list_json(const DatasetManifest& m);

}  // namespace dgseg
