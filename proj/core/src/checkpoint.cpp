#include "mqa/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mqa {

namespace {

constexpr char kMagic[4] = {'M', 'Q', 'A', 'C'};
constexpr std::uint32_t kFormatVersion = 1;

void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(os, b, 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(os, b, 8);
}

void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, sizeof(bits));
  write_u64(os, bits);
}

void read_bytes(std::istream& is, void* p, std::size_t n, const std::filesystem::path& path) {
  if (!is.read(static_cast<char*>(p), static_cast<std::streamsize>(n))) {
    throw std::runtime_error("truncated checkpoint file: " + path.string());
  }
}

std::uint32_t read_u32(std::istream& is, const std::filesystem::path& path) {
  unsigned char b[4];
  read_bytes(is, b, 4, path);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& is, const std::filesystem::path& path) {
  unsigned char b[8];
  read_bytes(is, b, 8, path);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& is, const std::filesystem::path& path) {
  const std::uint64_t bits = read_u64(is, path);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void save_checkpoint(const MQAModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());

  const MQAConfig& c = model.config;
  write_bytes(os, kMagic, 4);
  write_u32(os, kFormatVersion);
  write_u32(os, static_cast<std::uint32_t>(c.variant));
  write_u32(os, static_cast<std::uint32_t>(c.state_source));
  write_u32(os, static_cast<std::uint32_t>(c.d_embed));
  write_u32(os, static_cast<std::uint32_t>(c.d_hidden));
  write_u32(os, static_cast<std::uint32_t>(c.d_fuse));
  write_u32(os, static_cast<std::uint32_t>(c.d_img));
  write_u32(os, static_cast<std::uint32_t>(c.vocab_size));
  write_u64(os, c.seed);

  auto& mutable_model = const_cast<MQAModel&>(model);  // enumeration only reads
  for (const TensorRef& t : parameter_tensors(mutable_model)) {
    for (std::size_t i = 0; i < t.size; ++i) write_f64(os, t.data[i]);
  }
  if (!os) throw std::runtime_error("write failure on checkpoint: " + path.string());
}

MQAModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());

  char magic[4];
  read_bytes(is, magic, 4, path);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("not a checkpoint file (bad magic): " + path.string());
  }
  const std::uint32_t version = read_u32(is, path);
  if (version != kFormatVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                             ": " + path.string());
  }

  MQAConfig c;
  const std::uint32_t variant_tag = read_u32(is, path);
  if (variant_tag > static_cast<std::uint32_t>(Variant::Blind)) {
    throw std::runtime_error("invalid variant tag in checkpoint: " + path.string());
  }
  c.variant = static_cast<Variant>(variant_tag);
  const std::uint32_t source_tag = read_u32(is, path);
  if (source_tag > static_cast<std::uint32_t>(StateSource::Cell)) {
    throw std::runtime_error("invalid state-source tag in checkpoint: " + path.string());
  }
  c.state_source = static_cast<StateSource>(source_tag);
  c.d_embed = read_u32(is, path);
  c.d_hidden = read_u32(is, path);
  c.d_fuse = read_u32(is, path);
  c.d_img = read_u32(is, path);
  c.vocab_size = read_u32(is, path);
  c.seed = read_u64(is, path);

  MQAModel model = init_model(c);
  for (const TensorRef& t : parameter_tensors(model)) {
    for (std::size_t i = 0; i < t.size; ++i) t.data[i] = read_f64(is, path);
  }
  is.peek();
  if (!is.eof()) {
    throw std::runtime_error("trailing bytes after checkpoint tensors: " + path.string());
  }
  return model;
}

void save_config_text(const MQAConfig& config, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open config for writing: " + path.string());
  os << "# model configuration\n";
  os << "variant = " << variant_name(config.variant) << "\n";
  os << "state_source = " << state_source_name(config.state_source) << "\n";
  os << "d_embed = " << config.d_embed << "\n";
  os << "d_hidden = " << config.d_hidden << "\n";
  os << "d_fuse = " << config.d_fuse << "\n";
  os << "d_img = " << config.d_img << "\n";
  os << "vocab_size = " << config.vocab_size << "\n";
  os << "seed = " << config.seed << "\n";
  if (!os) throw std::runtime_error("write failure on config: " + path.string());
}

MQAConfig load_config_text(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path.string());

  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected `key = value`");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }

  auto require = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) {
      throw std::runtime_error(path.string() + ": missing config key `" + key + "`");
    }
    return it->second;
  };
  auto to_count = [&](const char* key) -> std::size_t {
    const std::string& s = require(key);
    try {
      return static_cast<std::size_t>(std::stoull(s));
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ": config key `" + key +
                               "` is not a non-negative integer: " + s);
    }
  };

  MQAConfig c;
  c.variant = variant_from_name(require("variant"));
  c.state_source = state_source_from_name(require("state_source"));
  c.d_embed = to_count("d_embed");
  c.d_hidden = to_count("d_hidden");
  c.d_fuse = to_count("d_fuse");
  c.d_img = to_count("d_img");
  c.vocab_size = to_count("vocab_size");
  c.seed = static_cast<std::uint64_t>(std::stoull(require("seed")));
  return c;
}

}  // namespace mqa
