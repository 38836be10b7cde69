#include "mqa/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mqa {

namespace {

const std::array<std::string, 3> kShapeNames = {"circle", "square", "triangle"};
const std::array<std::string, 4> kColorNames = {"red", "green", "blue", "yellow"};
const std::array<std::string, 4> kPositionNames = {"left", "right", "top", "bottom"};

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

TokenSequence split_tokens(const std::string& field) {
  TokenSequence tokens;
  std::istringstream ss(field);
  std::string tok;
  while (ss >> tok) tokens.push_back(std::move(tok));
  return tokens;
}

std::string join_tokens(const TokenSequence& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& out, double v) {
  const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(u);
}

constexpr char kFeatureMagic[4] = {'M', 'Q', 'F', 'B'};

}  // namespace

const std::string& shape_name(ObjShape s) { return kShapeNames[static_cast<int>(s)]; }
const std::string& color_name(ObjColor c) { return kColorNames[static_cast<int>(c)]; }
const std::string& position_name(ObjPosition p) { return kPositionNames[static_cast<int>(p)]; }

void ImageFeatureStore::put(const std::string& id, Vector v) {
  if (v.size() != d_img_)
    throw std::invalid_argument("ImageFeatureStore::put: vector for '" + id + "' has length " +
                                std::to_string(v.size()) + ", store dimension is " +
                                std::to_string(d_img_));
  auto [it, inserted] = features_.emplace(id, std::move(v));
  if (!inserted) throw std::invalid_argument("ImageFeatureStore::put: duplicate image id '" + id + "'");
  order_.push_back(id);
}

const Vector& ImageFeatureStore::get(const std::string& id) const {
  auto it = features_.find(id);
  if (it == features_.end())
    throw std::runtime_error("ImageFeatureStore: no feature vector for image id '" + id + "'");
  return it->second;
}

void ImageFeatureStore::save_text(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("ImageFeatureStore::save_text: cannot open " + path.string());
  out << "d_img=" << d_img_ << '\n';
  for (const auto& id : order_) {
    out << id << '\t';
    const Vector& v = features_.at(id);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out << ' ';
      out << format_double(v[i]);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("ImageFeatureStore::save_text: write failed for " + path.string());
}

ImageFeatureStore ImageFeatureStore::load_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("ImageFeatureStore::load_text: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("d_img=", 0) != 0)
    throw std::runtime_error("ImageFeatureStore::load_text: " + path.string() +
                             " is missing the d_img=<int> header");
  const std::size_t d = std::stoul(line.substr(6));
  ImageFeatureStore store(d);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("ImageFeatureStore::load_text: missing tab at line " +
                               std::to_string(lineno) + " of " + path.string());
    Vector v(d);
    std::istringstream ss(line.substr(tab + 1));
    for (std::size_t i = 0; i < d; ++i) {
      if (!(ss >> v[i]))
        throw std::runtime_error("ImageFeatureStore::load_text: expected " + std::to_string(d) +
                                 " values at line " + std::to_string(lineno) + " of " +
                                 path.string());
    }
    double extra;
    if (ss >> extra)
      throw std::runtime_error("ImageFeatureStore::load_text: too many values at line " +
                               std::to_string(lineno) + " of " + path.string());
    store.put(line.substr(0, tab), std::move(v));
  }
  return store;
}

void ImageFeatureStore::save_binary(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("ImageFeatureStore::save_binary: cannot open " + path.string());
  out.write(kFeatureMagic, 4);
  write_u32(out, 1);  // format version
  write_u32(out, static_cast<std::uint32_t>(d_img_));
  write_u32(out, static_cast<std::uint32_t>(order_.size()));
  for (const auto& id : order_) {
    write_u32(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    const Vector& v = features_.at(id);
    for (double x : v.data) write_f64(out, x);
  }
  if (!out) throw std::runtime_error("ImageFeatureStore::save_binary: write failed for " + path.string());
}

ImageFeatureStore ImageFeatureStore::load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("ImageFeatureStore::load_binary: cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw std::runtime_error("ImageFeatureStore::load_binary: " + path.string() +
                             " does not start with the MQFB magic");
  const std::uint32_t version = read_u32(in);
  if (version != 1)
    throw std::runtime_error("ImageFeatureStore::load_binary: unsupported format version " +
                             std::to_string(version));
  const std::size_t d = read_u32(in);
  const std::size_t n = read_u32(in);
  ImageFeatureStore store(d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = read_u32(in);
    std::string id(len, '\0');
    in.read(id.data(), static_cast<std::streamsize>(len));
    Vector v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = read_f64(in);
    if (!in)
      throw std::runtime_error("ImageFeatureStore::load_binary: truncated file " + path.string());
    store.put(id, std::move(v));
  }
  return store;
}

ImageFeatureStore ImageFeatureStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("ImageFeatureStore::load: cannot open " + path.string());
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  in.close();
  if (std::memcmp(magic, kFeatureMagic, 4) == 0) return load_binary(path);
  return load_text(path);
}

std::vector<QAExample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path.string());
  std::vector<QAExample> examples;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos)
      throw std::runtime_error("load_dataset: line " + std::to_string(lineno) + " of " +
                               path.string() + " does not have three tab-separated fields");
    QAExample ex;
    ex.image_id = line.substr(0, tab1);
    ex.question = split_tokens(line.substr(tab1 + 1, tab2 - tab1 - 1));
    ex.answer = split_tokens(line.substr(tab2 + 1));
    if (ex.image_id.empty())
      throw std::runtime_error("load_dataset: empty image id at line " + std::to_string(lineno) +
                               " of " + path.string());
    if (ex.question.empty())
      throw std::runtime_error("load_dataset: empty question at line " + std::to_string(lineno) +
                               " of " + path.string());
    if (ex.answer.empty())
      throw std::runtime_error("load_dataset: empty answer at line " + std::to_string(lineno) +
                               " of " + path.string());
    examples.push_back(std::move(ex));
  }
  return examples;
}

void save_dataset(const std::vector<QAExample>& examples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path.string());
  for (const auto& ex : examples)
    out << ex.image_id << '\t' << join_tokens(ex.question) << '\t' << join_tokens(ex.answer)
        << '\n';
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path.string());
}

Vector scene_features(const SyntheticScene& scene) {
  constexpr std::size_t kBlock = kNumShapes + kNumColors + kNumPositions;
  Vector v(kSyntheticFeatureDim);
  for (std::size_t slot = 0; slot < scene.objects.size(); ++slot) {
    const SceneObject& obj = scene.objects[slot];
    const std::size_t base = slot * kBlock;
    v[base + static_cast<std::size_t>(obj.shape)] = 1.0;
    v[base + kNumShapes + static_cast<std::size_t>(obj.color)] = 1.0;
    v[base + kNumShapes + kNumColors + static_cast<std::size_t>(obj.position)] = 1.0;
  }
  return v;
}

namespace {

const SceneObject* find_shape(const SyntheticScene& scene, const std::string& shape) {
  for (const auto& obj : scene.objects)
    if (shape_name(obj.shape) == shape) return &obj;
  return nullptr;
}

bool is_shape_token(const std::string& tok) {
  return std::find(kShapeNames.begin(), kShapeNames.end(), tok) != kShapeNames.end();
}

[[noreturn]] void unknown_template(const TokenSequence& question) {
  std::string q;
  for (const auto& t : question) q += t + " ";
  throw std::runtime_error("oracle_answer: question does not match a known template: " + q);
}

}  // namespace

TokenSequence oracle_answer(const SyntheticScene& scene, const TokenSequence& question) {
  const auto& q = question;
  // "what color is the <shape> ?"
  if (q.size() == 6 && q[0] == "what" && q[1] == "color" && q[2] == "is" && q[3] == "the" &&
      is_shape_token(q[4]) && q[5] == "?") {
    const SceneObject* obj = find_shape(scene, q[4]);
    if (!obj)
      throw std::runtime_error("oracle_answer: scene " + scene.image_id + " has no " + q[4]);
    return {color_name(obj->color)};
  }
  // "where is the <shape> ?"
  if (q.size() == 5 && q[0] == "where" && q[1] == "is" && q[2] == "the" && is_shape_token(q[3]) &&
      q[4] == "?") {
    const SceneObject* obj = find_shape(scene, q[3]);
    if (!obj)
      throw std::runtime_error("oracle_answer: scene " + scene.image_id + " has no " + q[3]);
    return {position_name(obj->position)};
  }
  // "is there a <shape> ?"
  if (q.size() == 5 && q[0] == "is" && q[1] == "there" && q[2] == "a" && is_shape_token(q[3]) &&
      q[4] == "?") {
    return {find_shape(scene, q[3]) ? "yes" : "no"};
  }
  // "how many objects are there ?"
  if (q.size() == 6 && q[0] == "how" && q[1] == "many" && q[2] == "objects" && q[3] == "are" &&
      q[4] == "there" && q[5] == "?") {
    return {std::to_string(scene.objects.size())};
  }
  unknown_template(question);
}

SyntheticData generate_synthetic(std::size_t n_images, std::size_t questions_per_image,
                                 std::uint64_t seed) {
  if (n_images < 1) throw std::invalid_argument("generate_synthetic: n_images must be >= 1");
  if (questions_per_image < 1)
    throw std::invalid_argument("generate_synthetic: questions_per_image must be >= 1");

  SyntheticData data;
  data.features = ImageFeatureStore(kSyntheticFeatureDim);
  SplitMix64 rng(mix_seed(seed, "synthetic-scenes"));

  for (std::size_t img = 0; img < n_images; ++img) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img_%06zu", img);
    SyntheticScene scene;
    scene.image_id = buf;

    const std::size_t n_objects = 1 + rng.next_below(3);
    // Choose a subset of shapes of that size; shapes stay pairwise distinct.
    std::array<int, kNumShapes> shapes = {0, 1, 2};
    for (int i = kNumShapes - 1; i > 0; --i) {
      const int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
      std::swap(shapes[i], shapes[j]);
    }
    for (std::size_t k = 0; k < n_objects; ++k) {
      SceneObject obj;
      obj.shape = static_cast<ObjShape>(shapes[k]);
      obj.color = static_cast<ObjColor>(rng.next_below(kNumColors));
      obj.position = static_cast<ObjPosition>(rng.next_below(kNumPositions));
      scene.objects.push_back(obj);
    }
    std::sort(scene.objects.begin(), scene.objects.end(),
              [](const SceneObject& a, const SceneObject& b) { return a.shape < b.shape; });

    data.features.put(scene.image_id, scene_features(scene));

    for (std::size_t qi = 0; qi < questions_per_image; ++qi) {
      QAExample ex;
      ex.image_id = scene.image_id;
      const std::uint64_t tpl = rng.next_below(4);
      if (tpl == 0) {
        const auto& obj = scene.objects[rng.next_below(scene.objects.size())];
        ex.question = {"what", "color", "is", "the", shape_name(obj.shape), "?"};
      } else if (tpl == 1) {
        const auto& obj = scene.objects[rng.next_below(scene.objects.size())];
        ex.question = {"where", "is", "the", shape_name(obj.shape), "?"};
      } else if (tpl == 2) {
        const auto shape = static_cast<ObjShape>(rng.next_below(kNumShapes));
        ex.question = {"is", "there", "a", shape_name(shape), "?"};
      } else {
        ex.question = {"how", "many", "objects", "are", "there", "?"};
      }
      ex.answer = oracle_answer(scene, ex.question);
      data.examples.push_back(std::move(ex));
    }
    data.scenes.push_back(std::move(scene));
  }
  return data;
}

DatasetSplits split_by_image(const SyntheticData& data) {
  const std::size_t n = data.scenes.size();
  const std::size_t n_train = n * 8 / 10;
  const std::size_t n_valid = n / 10;

  std::unordered_map<std::string, int> split_of;
  for (std::size_t i = 0; i < n; ++i) {
    const int split = i < n_train ? 0 : (i < n_train + n_valid ? 1 : 2);
    split_of[data.scenes[i].image_id] = split;
  }
  DatasetSplits splits;
  for (const auto& ex : data.examples) {
    switch (split_of.at(ex.image_id)) {
      case 0: splits.train.push_back(ex); break;
      case 1: splits.valid.push_back(ex); break;
      default: splits.test.push_back(ex); break;
    }
  }
  return splits;
}

}  // namespace mqa
