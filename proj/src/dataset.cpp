#include "agsfcos/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "agsfcos/errors.hpp"

namespace agsfcos {

using nlohmann::json;

namespace {

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": malformed JSON at byte " + std::to_string(e.byte) +
                     ": " + e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

template <typename T>
T field(const json& obj, const char* key, const char* where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ParseError(std::string(where) + ": missing field '" + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string(where) + "." + key + ": " + e.what());
  }
}

}  // namespace

std::vector<std::vector<GroundTruthBox>> DatasetIndex::gts_per_image() const {
  std::unordered_map<std::int64_t, std::size_t> slot;
  for (std::size_t i = 0; i < images.size(); ++i) slot[images[i].id] = i;
  std::vector<std::vector<GroundTruthBox>> out(images.size());
  for (const auto& a : annotations) out[slot.at(a.image_id)].push_back(a.gt);
  return out;
}

const ImageRecord* DatasetIndex::find_image(std::int64_t id) const {
  for (const auto& im : images) {
    if (im.id == id) return &im;
  }
  return nullptr;
}

DatasetIndex parse_coco_annotations(const std::string& text,
                                    const std::filesystem::path& root) {
  const json doc = parse_json(text, "annotations");
  if (!doc.is_object()) throw ParseError("annotations: top level must be an object");
  DatasetIndex index;
  index.root = root;

  std::set<std::int64_t> image_ids;
  for (const json& im : doc.value("images", json::array())) {
    ImageRecord r;
    r.id = field<std::int64_t>(im, "id", "images[]");
    r.file = field<std::string>(im, "file_name", "images[]");
    r.width = field<std::size_t>(im, "width", "images[]");
    r.height = field<std::size_t>(im, "height", "images[]");
    if (!image_ids.insert(r.id).second) {
      throw IntegrityError("annotations: duplicate image id " + std::to_string(r.id));
    }
    index.images.push_back(std::move(r));
  }

  for (const json& c : doc.value("categories", json::array())) {
    index.categories.push_back({field<std::int64_t>(c, "id", "categories[]"),
                                c.value("name", std::string())});
  }
  std::sort(index.categories.begin(), index.categories.end(),
            [](const Category& a, const Category& b) { return a.coco_id < b.coco_id; });
  std::unordered_map<std::int64_t, std::size_t> remap;
  for (std::size_t i = 0; i < index.categories.size(); ++i) {
    if (!remap.emplace(index.categories[i].coco_id, i).second) {
      throw IntegrityError("annotations: duplicate category id " +
                           std::to_string(index.categories[i].coco_id));
    }
  }

  for (const json& a : doc.value("annotations", json::array())) {
    AnnotationRecord r;
    r.image_id = field<std::int64_t>(a, "image_id", "annotations[]");
    if (!image_ids.contains(r.image_id)) {
      throw IntegrityError("annotations: image_id " + std::to_string(r.image_id) +
                           " does not reference an image");
    }
    const auto cat = field<std::int64_t>(a, "category_id", "annotations[]");
    const auto it = remap.find(cat);
    if (it == remap.end()) {
      throw IntegrityError("annotations: unknown category_id " + std::to_string(cat));
    }
    const auto bbox = field<std::vector<double>>(a, "bbox", "annotations[]");
    if (bbox.size() != 4) throw ParseError("annotations[].bbox must have 4 numbers");
    if (!(bbox[2] > 0.0) || !(bbox[3] > 0.0)) {
      throw InputError("annotations: degenerate bbox on image " +
                       std::to_string(r.image_id));
    }
    r.gt = {{bbox[0], bbox[1], bbox[0] + bbox[2], bbox[1] + bbox[3]}, it->second};
    index.annotations.push_back(r);
  }
  return index;
}

DatasetIndex load_coco_annotations(const std::filesystem::path& path) {
  return parse_coco_annotations(read_file(path), path.parent_path());
}

json coco_annotations_json(const DatasetIndex& index) {
  json images = json::array();
  for (const auto& im : index.images) {
    images.push_back({{"id", im.id},
                      {"file_name", im.file},
                      {"width", im.width},
                      {"height", im.height}});
  }
  json categories = json::array();
  for (const auto& c : index.categories) {
    categories.push_back({{"id", c.coco_id}, {"name", c.name}});
  }
  json annotations = json::array();
  std::int64_t next_id = 1;
  for (const auto& a : index.annotations) {
    const Box& b = a.gt.box;
    annotations.push_back({{"id", next_id++},
                           {"image_id", a.image_id},
                           {"category_id", index.categories.at(a.gt.class_id).coco_id},
                           {"bbox", {b.x1, b.y1, b.width(), b.height()}},
                           {"area", b.area()},
                           {"iscrowd", 0}});
  }
  return {{"images", images}, {"annotations", annotations}, {"categories", categories}};
}

void save_coco_annotations(const std::filesystem::path& path, const DatasetIndex& index) {
  write_file(path, coco_annotations_json(index).dump(1) + "\n");
}

json coco_results_json(const std::map<std::int64_t, std::vector<Detection>>& dets,
                       const DatasetIndex& index) {
  json out = json::array();
  for (const auto& [image_id, list] : dets) {
    for (const auto& d : list) {
      const Box& b = d.box;
      out.push_back({{"image_id", image_id},
                     {"category_id", index.categories.at(d.class_id).coco_id},
                     {"bbox", {b.x1, b.y1, b.width(), b.height()}},
                     {"score", d.score}});
    }
  }
  return out;
}

void save_coco_results(const std::filesystem::path& path,
                       const std::map<std::int64_t, std::vector<Detection>>& dets,
                       const DatasetIndex& index) {
  write_file(path, coco_results_json(dets, index).dump(1) + "\n");
}

std::map<std::int64_t, std::vector<Detection>> load_coco_results(
    const std::filesystem::path& path, const DatasetIndex& index) {
  const json doc = parse_json(read_file(path), path.string());
  if (!doc.is_array()) throw ParseError(path.string() + ": results must be an array");
  std::unordered_map<std::int64_t, std::size_t> remap;
  for (std::size_t i = 0; i < index.categories.size(); ++i) {
    remap[index.categories[i].coco_id] = i;
  }
  std::map<std::int64_t, std::vector<Detection>> out;
  for (const json& r : doc) {
    const auto image_id = field<std::int64_t>(r, "image_id", "results[]");
    if (!index.find_image(image_id)) {
      throw IntegrityError("results: unknown image_id " + std::to_string(image_id));
    }
    const auto cat = field<std::int64_t>(r, "category_id", "results[]");
    const auto it = remap.find(cat);
    if (it == remap.end()) {
      throw IntegrityError("results: unknown category_id " + std::to_string(cat));
    }
    const auto bbox = field<std::vector<double>>(r, "bbox", "results[]");
    if (bbox.size() != 4) throw ParseError("results[].bbox must have 4 numbers");
    out[image_id].push_back({{bbox[0], bbox[1], bbox[0] + bbox[2], bbox[1] + bbox[3]},
                             it->second,
                             field<double>(r, "score", "results[]")});
  }
  return out;
}

}  // namespace agsfcos
