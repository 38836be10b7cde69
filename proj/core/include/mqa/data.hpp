#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "mqa/numerics.hpp"
#include "mqa/vocab.hpp"

namespace mqa {

// One training/evaluation unit: an image id plus a question/answer pair.
struct QAExample {
  std::string image_id;
  TokenSequence question;
  TokenSequence answer;
};

// Map from image id to a fixed-length feature vector. Immutable after load.
class ImageFeatureStore {
 public:
  ImageFeatureStore() = default;
  explicit ImageFeatureStore(std::size_t d_img) : d_img_(d_img) {}

  std::size_t d_img() const { return d_img_; }
  std::size_t size() const { return order_.size(); }
  bool contains(const std::string& id) const { return features_.count(id) != 0; }

  void put(const std::string& id, Vector v);
  // Throws std::runtime_error naming the image id when absent.
  const Vector& get(const std::string& id) const;
  // Insertion order; used for deterministic serialization.
  const std::vector<std::string>& ids() const { return order_; }

  // Text format: header line "d_img=<int>", then "id<TAB>v1 v2 ... v_d" per line.
  void save_text(const std::filesystem::path& path) const;
  static ImageFeatureStore load_text(const std::filesystem::path& path);

  // Binary format ("MQFB"): see README for the exact layout.
  void save_binary(const std::filesystem::path& path) const;
  static ImageFeatureStore load_binary(const std::filesystem::path& path);

  // Sniffs the magic bytes and dispatches to the right loader.
  static ImageFeatureStore load(const std::filesystem::path& path);

 private:
  std::size_t d_img_ = 0;
  std::unordered_map<std::string, Vector> features_;
  std::vector<std::string> order_;
};

// Line format: image_id <TAB> question tokens <TAB> answer tokens.
// Tokens are space-separated. Malformed lines raise with the line number.
std::vector<QAExample> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::vector<QAExample>& examples, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic scene benchmark with an exact answer oracle.
// ---------------------------------------------------------------------------

enum class ObjShape : int { Circle = 0, Square = 1, Triangle = 2 };
enum class ObjColor : int { Red = 0, Green = 1, Blue = 2, Yellow = 3 };
enum class ObjPosition : int { Left = 0, Right = 1, Top = 2, Bottom = 3 };

inline constexpr int kNumShapes = 3;
inline constexpr int kNumColors = 4;
inline constexpr int kNumPositions = 4;
// Per-object one-hot blocks (shape+color+position), padded to 3 object slots.
inline constexpr std::size_t kSyntheticFeatureDim = 3 * (kNumShapes + kNumColors + kNumPositions);

const std::string& shape_name(ObjShape s);
const std::string& color_name(ObjColor c);
const std::string& position_name(ObjPosition p);

struct SceneObject {
  ObjShape shape;
  ObjColor color;
  ObjPosition position;
};

// 1..3 objects with pairwise-distinct shapes, kept sorted by shape so the
// feature encoding is injective over scenes.
struct SyntheticScene {
  std::string image_id;
  std::vector<SceneObject> objects;
};

Vector scene_features(const SyntheticScene& scene);

// Exact answer read off the scene. Throws std::runtime_error on a question
// that matches no known template.
TokenSequence oracle_answer(const SyntheticScene& scene, const TokenSequence& question);

struct SyntheticData {
  std::vector<QAExample> examples;  // grouped by image, in image order
  ImageFeatureStore features;
  std::vector<SyntheticScene> scenes;
};

// Seeded scene + question generation. Question templates:
//   "what color is the <shape> ?"     -> color token
//   "where is the <shape> ?"          -> position token
//   "is there a <shape> ?"            -> "yes" / "no"
//   "how many objects are there ?"    -> "1" / "2" / "3"
// Only the yes/no template may ask about absent shapes.
SyntheticData generate_synthetic(std::size_t n_images, std::size_t questions_per_image,
                                 std::uint64_t seed);

struct DatasetSplits {
  std::vector<QAExample> train;
  std::vector<QAExample> valid;
  std::vector<QAExample> test;
};

// 80/10/10 split by image so no image leaks across splits.
DatasetSplits split_by_image(const SyntheticData& data);

}  // namespace mqa
