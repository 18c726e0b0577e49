#include "dgseg/dataset.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dgseg/error.hpp"
#include "dgseg/png_io.hpp"

namespace dgseg {

namespace fs = std::filesystem;
using nlohmann::json;

void validate_manifest(const DatasetManifest& m) {
  if (m.num_classes < 2) throw ConfigError("manifest: num_classes must be >= 2");
  if (m.num_classes > 255) throw ConfigError("manifest: num_classes must be <= 255");
  if (!m.class_names.empty() && static_cast<int>(m.class_names.size()) != m.num_classes)
    throw ConfigError("manifest: class_names has " + std::to_string(m.class_names.size()) +
                      " entries, expected " + std::to_string(m.num_classes));
  if (m.eval_subset) {
    for (int c : *m.eval_subset)
      if (c < 0 || c >= m.num_classes)
        throw ConfigError("manifest: eval_subset id " + std::to_string(c) + " out of range");
  }
}

DatasetFormat parse_dataset_format(const std::string& s) {
  if (s == "toy") return DatasetFormat::kToy;
  if (s == "cityscapes-like" || s == "cityscapes") return DatasetFormat::kCityscapesLike;
  throw ConfigError("unknown dataset format '" + s + "' (expected toy or cityscapes-like)");
}

namespace {

std::vector<std::string> default_names(int n) {
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back("class" + std::to_string(i));
  return names;
}

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("invalid JSON in " + p.string() + ": " + e.what());
  }
}

std::vector<InstanceMask> read_instances(const fs::path& p) {
  json j = read_json_file(p);
  const int h = j.at("height").get<int>();
  const int w = j.at("width").get<int>();
  std::vector<InstanceMask> out;
  for (const auto& e : j.at("instances")) {
    InstanceMask m;
    m.class_id = e.at("class_id").get<int>();
    m.height = h;
    m.width = w;
    m.mask = rle_decode(e.at("rle").get<std::vector<std::uint32_t>>(), static_cast<std::size_t>(h) * w);
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& root, DatasetFormat format, const LoadOptions& opts) {
  if (!fs::is_directory(root)) throw DataError("dataset directory does not exist: " + root.string());
  DatasetManifest m;
  std::string domain_tag = format == DatasetFormat::kToy ? "toy" : "cityscapes-like";

  if (format == DatasetFormat::kToy) {
    const fs::path meta = root / "dataset.json";
    if (!fs::exists(meta)) throw DataError("toy dataset lacks dataset.json: " + root.string());
    json j = read_json_file(meta);
    m.num_classes = j.at("num_classes").get<int>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (j.contains("eval_subset") && !j["eval_subset"].is_null())
      m.eval_subset = j["eval_subset"].get<std::vector<int>>();
    domain_tag = j.value("domain_tag", domain_tag);
  } else {
    m.num_classes = opts.num_classes;
    m.class_names = opts.class_names.empty() ? default_names(opts.num_classes) : opts.class_names;
    m.remap = opts.remap;
  }
  if (opts.eval_subset) m.eval_subset = opts.eval_subset;
  validate_manifest(m);

  const fs::path image_dir = root / "images" / opts.split;
  const fs::path label_dir = root / "labels" / opts.split;
  const fs::path inst_dir = root / "instances" / opts.split;
  std::vector<fs::path> images;
  if (fs::is_directory(image_dir)) {
    for (const auto& e : fs::directory_iterator(image_dir))
      if (e.is_regular_file() && e.path().extension() == ".png") images.push_back(e.path());
  }
  std::sort(images.begin(), images.end());

  for (const auto& img : images) {
    const std::string stem = img.stem().string();
    const fs::path lbl = label_dir / (stem + ".png");
    if (!fs::exists(lbl)) {
      ++m.missing_label_count;
      continue;
    }
    if (opts.check_dimensions && png_dimensions(img) != png_dimensions(lbl))
      throw DataError("dimension mismatch between " + img.string() + " and " + lbl.string());
    SampleRecord r;
    r.id = stem;
    r.domain_tag = domain_tag;
    r.image_path = img;
    r.label_path = lbl;
    const fs::path inst = inst_dir / (stem + ".json");
    if (fs::exists(inst)) r.instances_path = inst;
    m.records.push_back(std::move(r));
  }
  if (m.records.empty()) throw DataError("zero valid pairs under " + root.string());
  if (m.missing_label_count > 0)
    std::cerr << "warning: " << m.missing_label_count << " image(s) without labels skipped under "
              << root.string() << "\n";
  return m;
}

Sample load_sample(const DatasetManifest& m, std::size_t index) {
  const SampleRecord& r = m.records.at(index);
  if (r.data) return *r.data;
  Sample s;
  s.image = read_png_rgb(r.image_path);
  s.label = read_png_index(r.label_path);
  if (m.remap) s.label = remap_labels(s.label, *m.remap);
  if (!r.instances_path.empty()) s.instances = read_instances(r.instances_path);
  s.domain_tag = r.domain_tag;
  if (s.image.height() != s.label.height() || s.image.width() != s.label.width())
    throw DataError("dimension mismatch between " + r.image_path.string() + " and " + r.label_path.string());
  for (auto v : s.label.data())
    if (v != kIgnore && v >= m.num_classes)
      throw DataError(r.label_path.string() + ": label id " + std::to_string(v) + " >= num_classes");
  return s;
}

LabelMap remap_labels(const LabelMap& raw, const RemapTable& table) {
  std::array<std::uint8_t, 256> lut;
  lut.fill(kIgnore);
  for (auto [from, to] : table)
    if (from >= 0 && from < 256) lut[from] = static_cast<std::uint8_t>(to >= 0 && to < 256 ? to : kIgnore);
  LabelMap out(raw.height(), raw.width());
  auto src = raw.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = lut[src[i]];
  return out;
}

RemapTable compose(const RemapTable& first, const RemapTable& second) {
  RemapTable out;
  for (auto [from, mid] : first) {
    auto it = second.find(mid);
    out[from] = it == second.end() ? kIgnore : it->second;
  }
  return out;
}

RemapTable load_remap_table(const fs::path& path) {
  json j = read_json_file(path);
  if (!j.is_object()) throw ConfigError("remap table must be a JSON object: " + path.string());
  RemapTable t;
  for (auto& [k, v] : j.items()) {
    int from = 0;
    try {
      std::size_t used = 0;
      from = std::stoi(k, &used);
      if (used != k.size()) throw std::invalid_argument(k);
    } catch (const std::exception&) {
      throw ConfigError("remap table key is not an integer: '" + k + "'");
    }
    if (!v.is_number_integer()) throw ConfigError("remap table value for '" + k + "' is not an integer");
    t[from] = v.get<int>();
  }
  return t;
}

RemapTable cityscapes_remap_table() {
  return {{7, 0},   {8, 1},   {11, 2},  {12, 3},  {13, 4},  {17, 5},  {19, 6},
          {20, 7},  {21, 8},  {22, 9},  {23, 10}, {24, 11}, {25, 12}, {26, 13},
          {27, 14}, {28, 15}, {31, 16}, {32, 17}, {33, 18}};
}

std::vector<std::string> cityscapes_class_names() {
  return {"road",       "sidewalk", "building", "wall",  "fence",  "pole",  "traffic light",
          "traffic sign", "vegetation", "terrain", "sky", "person", "rider", "car",
          "truck",      "bus",      "train",    "motorcycle", "bicycle"};
}

std::vector<InstanceMask> extract_instances(const LabelMap& label, const std::set<int>& thing_classes, int min_area) {
  const int h = label.height();
  const int w = label.width();
  std::vector<int> comp(label.pixels(), -1);
  // (class, first raster index) ordering is produced by scanning per class.
  std::vector<InstanceMask> out;
  std::vector<int> stack;
  for (int cls : thing_classes) {
    for (int start = 0; start < h * w; ++start) {
      if (label.data()[start] != cls || comp[start] >= 0) continue;
      InstanceMask m;
      m.class_id = cls;
      m.height = h;
      m.width = w;
      m.mask.assign(label.pixels(), 0);
      std::size_t area = 0;
      stack.assign(1, start);
      comp[start] = start;
      while (!stack.empty()) {
        int p = stack.back();
        stack.pop_back();
        m.mask[p] = 1;
        ++area;
        const int y = p / w;
        const int x = p % w;
        const int nbrs[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
        for (auto [ny, nx] : nbrs) {
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const int q = ny * w + nx;
          if (comp[q] < 0 && label.data()[q] == cls) {
            comp[q] = start;
            stack.push_back(q);
          }
        }
      }
      if (static_cast<int>(area) >= min_area) out.push_back(std::move(m));
    }
  }
  return out;
}

std::vector<std::uint32_t> rle_encode(const std::vector<std::uint8_t>& mask) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t len = 0;
  for (auto v : mask) {
    std::uint8_t b = v ? 1 : 0;
    if (b != current) {
      runs.push_back(len);
      current = b;
      len = 0;
    }
    ++len;
  }
  runs.push_back(len);
  return runs;
}

std::vector<std::uint8_t> rle_decode(const std::vector<std::uint32_t>& runs, std::size_t length) {
  std::vector<std::uint8_t> mask;
  mask.reserve(length);
  std::uint8_t value = 0;
  for (auto r : runs) {
    mask.insert(mask.end(), r, value);
    value ^= 1;
  }
  if (mask.size() != length)
    throw DataError("RLE length " + std::to_string(mask.size()) + " does not match mask size " + std::to_string(length));
  return mask;
}

void write_dataset(const fs::path& root, const std::string& split, const DatasetManifest& m) {
  validate_manifest(m);
  const fs::path image_dir = root / "images" / split;
  const fs::path label_dir = root / "labels" / split;
  const fs::path inst_dir = root / "instances" / split;
  std::error_code ec;
  for (const auto& d : {image_dir, label_dir, inst_dir}) {
    fs::create_directories(d, ec);
    if (ec) throw DataError("cannot create " + d.string() + ": " + ec.message());
  }
  json meta;
  meta["format"] = "toy";
  meta["version"] = 1;
  meta["num_classes"] = m.num_classes;
  meta["class_names"] = m.class_names;
  meta["eval_subset"] = m.eval_subset ? json(*m.eval_subset) : json(nullptr);
  meta["domain_tag"] = m.records.empty() ? std::string("toy") : m.records.front().domain_tag;
  {
    std::ofstream out(root / "dataset.json");
    if (!out) throw DataError("cannot write " + (root / "dataset.json").string());
    out << meta.dump(2) << "\n";
  }
  for (std::size_t i = 0; i < m.size(); ++i) {
    const Sample s = load_sample(m, i);
    const std::string& id = m.records[i].id;
    write_png_rgb(image_dir / (id + ".png"), s.image);
    write_png_gray(label_dir / (id + ".png"), s.label);
    json inst;
    inst["height"] = s.label.height();
    inst["width"] = s.label.width();
    inst["instances"] = json::array();
    for (const auto& mask : s.instances)
      inst["instances"].push_back({{"class_id", mask.class_id}, {"rle", rle_encode(mask.mask)}});
    std::ofstream out(inst_dir / (id + ".json"));
    if (!out) throw DataError("cannot write instances for " + id);
    out << inst.dump() << "\n";
  }
}

std::string record_list_json(const DatasetManifest& m) {
  std::ostringstream os;
  for (const auto& r : m.records) os << json{{"id", r.id}, {"domain_tag", r.domain_tag}}.dump() << "\n";
  return os.str();
}

}  // namespace dgseg
