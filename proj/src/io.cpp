#include "hyperseg/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace hyperseg {

namespace {

constexpr std::array<char, 4> kTensorMagic{'H', 'T', 'N', 'S'};

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

template <class T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw FormatError("truncated file: " + path.string());
  return value;
}

std::vector<char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Reads one whitespace-delimited header token of a graymap, skipping comments.
std::string pgm_token(const std::vector<char>& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  std::string token;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) token += bytes[pos++];
  return token;
}

std::size_t pgm_number(const std::vector<char>& bytes, std::size_t& pos, const std::filesystem::path& path) {
  const std::string token = pgm_token(bytes, pos);
  if (token.empty() || token.find_first_not_of("0123456789") != std::string::npos)
    throw FormatError("malformed graymap header: " + path.string());
  return std::stoull(token);
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  if (tensor.shape.size() > kMaxTensorRank) throw FormatError("tensor rank exceeds 4");
  std::uint64_t count = 1;
  for (std::uint64_t d : tensor.shape) count *= d;
  if (count != tensor.values.size()) throw FormatError("tensor shape does not match payload");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(kTensorMagic.data(), kTensorMagic.size());
  put(out, static_cast<std::uint32_t>(tensor.shape.size()));
  for (std::uint64_t d : tensor.shape) put(out, d);
  out.write(reinterpret_cast<const char*>(tensor.values.data()),
            static_cast<std::streamsize>(tensor.values.size() * sizeof(float)));
  if (!out) throw FormatError("write failed: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) throw FormatError("truncated file: " + path.string());
  if (magic != kTensorMagic) throw FormatError("bad tensor magic: " + path.string());
  const auto rank = get<std::uint32_t>(in, path);
  if (rank > kMaxTensorRank) throw FormatError("tensor rank exceeds 4: " + path.string());
  Tensor t;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = get<std::uint64_t>(in, path);
    if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / sizeof(float) / d)
      throw FormatError("tensor shape overflow: " + path.string());
    count *= d;
    t.shape.push_back(d);
  }
  const auto header_end = in.tellg();
  in.seekg(0, std::ios::end);
  const auto remaining = static_cast<std::uint64_t>(in.tellg() - header_end);
  if (remaining < count * sizeof(float)) throw FormatError("truncated tensor payload: " + path.string());
  if (remaining > count * sizeof(float)) throw FormatError("trailing bytes after tensor payload: " + path.string());
  in.seekg(header_end);
  t.values.resize(count);
  in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(count * sizeof(float)));
  return t;
}

Tensor to_tensor(const Field<double>& field) {
  Tensor t{{field.height(), field.width(), field.channels()}, {}};
  t.values.reserve(field.size());
  for (double v : field.data()) t.values.push_back(static_cast<float>(v));
  return t;
}

Field<double> field_from_tensor(const Tensor& tensor) {
  if (tensor.shape.size() != 3) throw FormatError("feature tensor must have rank 3 (H, W, F)");
  Field<double> f(tensor.shape[0], tensor.shape[1], tensor.shape[2]);
  for (std::size_t i = 0; i < f.size(); ++i) f.data()[i] = tensor.values[i];
  return f;
}

void write_labels(const std::filesystem::path& path, const LabelMap& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "P5\n" << labels.width() << ' ' << labels.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(labels.data().data()), static_cast<std::streamsize>(labels.size()));
  if (!out) throw FormatError("write failed: " + path.string());
}

LabelMap read_labels(const std::filesystem::path& path) {
  const std::vector<char> bytes = read_all(path);
  std::size_t pos = 0;
  if (pgm_token(bytes, pos) != "P5") throw FormatError("not a binary graymap: " + path.string());
  const std::size_t width = pgm_number(bytes, pos, path);
  const std::size_t height = pgm_number(bytes, pos, path);
  const std::size_t maxval = pgm_number(bytes, pos, path);
  if (maxval == 0 || maxval > 255) throw FormatError("graymap must be 8-bit: " + path.string());
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError("malformed graymap header: " + path.string());
  ++pos;
  if (bytes.size() - pos != width * height)
    throw FormatError("graymap payload does not match its width/height header: " + path.string());
  LabelMap labels(height, width);
  std::memcpy(labels.data().data(), bytes.data() + pos, width * height);
  return labels;
}

LabelMap make_label_map(std::size_t height, std::size_t width, const std::vector<int>& values) {
  if (values.size() != height * width) throw std::invalid_argument("make_label_map: size mismatch");
  LabelMap labels(height, width);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] < 0 || values[i] > 255) throw std::out_of_range("label value outside 0..255");
    labels[i] = static_cast<std::uint8_t>(values[i]);
  }
  return labels;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data, const ClassHierarchy& tree) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "features");
  fs::create_directories(dir / "labels");
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw FormatError("cannot write manifest in " + dir.string());
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::ostringstream stem;
    stem << "img_" << std::setw(4) << std::setfill('0') << i;
    const fs::path features = fs::path("features") / (stem.str() + ".tensor");
    const fs::path labels = fs::path("labels") / (stem.str() + ".pgm");
    write_tensor(dir / features, to_tensor(data[i].features));
    write_labels(dir / labels, data[i].labels);
    manifest << features.generic_string() << ' ' << labels.generic_string() << '\n';
  }
  std::ofstream(dir / "hierarchy.json") << tree.to_json() << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw FormatError("missing manifest.txt in " + dir.string());
  Dataset data;
  std::string features, labels;
  while (manifest >> features >> labels) {
    SegSample s{field_from_tensor(read_tensor(dir / features)), read_labels(dir / labels)};
    if (s.features.height() != s.labels.height() || s.features.width() != s.labels.width())
      throw FormatError("feature/label shape mismatch for " + features);
    data.push_back(std::move(s));
  }
  return data;
}

std::uint64_t dataset_checksum(const std::filesystem::path& dir) {
  std::uint64_t hash = 1469598103934665603ull;
  auto mix = [&hash](const std::vector<char>& bytes) {
    for (char b : bytes) {
      hash ^= static_cast<unsigned char>(b);
      hash *= 1099511628211ull;
    }
  };
  mix(read_all(dir / "manifest.txt"));
  std::ifstream manifest(dir / "manifest.txt");
  std::string features, labels;
  while (manifest >> features >> labels) {
    mix(read_all(dir / features));
    mix(read_all(dir / labels));
  }
  return hash;
}

}  // namespace hyperseg
