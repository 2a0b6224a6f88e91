#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "agsfcos/box.hpp"

namespace agsfcos {

struct ImageRecord {
  std::int64_t id = 0;
  std::string file;  // relative to the dataset root
  std::size_t width = 0;
  std::size_t height = 0;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct AnnotationRecord {
  std::int64_t image_id = 0;
  GroundTruthBox gt;  // class_id is the contiguous 0-based index

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

struct Category {
  std::int64_t coco_id = 0;
  std::string name;

  friend bool operator==(const Category&, const Category&) = default;
};

// Categories are sorted by COCO id; a category's position is its class id.
struct DatasetIndex {
  std::filesystem::path root;
  std::vector<ImageRecord> images;
  std::vector<AnnotationRecord> annotations;
  std::vector<Category> categories;

  std::size_t num_classes() const { return categories.size(); }
  // Ground truth grouped per image, in image order.
  std::vector<std::vector<GroundTruthBox>> gts_per_image() const;
  const ImageRecord* find_image(std::int64_t id) const;

  friend bool operator==(const DatasetIndex& a, const DatasetIndex& b) {
    return a.images == b.images && a.annotations == b.annotations &&
           a.categories == b.categories;
  }
};

// Parses a COCO annotation document. Throws ParseError for malformed JSON,
// IntegrityError for dangling or duplicate ids and InputError for
// degenerate boxes.
DatasetIndex parse_coco_annotations(const std::string& text,
                                    const std::filesystem::path& root = {});
DatasetIndex load_coco_annotations(const std::filesystem::path& path);

nlohmann::json coco_annotations_json(const DatasetIndex& index);
void save_coco_annotations(const std::filesystem::path& path, const DatasetIndex& index);

// COCO results format: [{image_id, category_id, bbox:[x,y,w,h], score}].
nlohmann::json coco_results_json(const std::map<std::int64_t, std::vector<Detection>>& dets,
                                 const DatasetIndex& index);
void save_coco_results(const std::filesystem::path& path,
                       const std::map<std::int64_t, std::vector<Detection>>& dets,
                       const DatasetIndex& index);
std::map<std::int64_t, std::vector<Detection>> load_coco_results(
    const std::filesystem::path& path, const DatasetIndex& index);

}  // namespace agsfcos
