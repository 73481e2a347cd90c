#include "mfnn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mfnn/error.hpp"
#include "mfnn/rng.hpp"

namespace fs = std::filesystem;

namespace mfnn {

Tensor Dataset::batch(const std::vector<int>& indices) const {
  Tensor x({static_cast<int>(indices.size()), channels, height, width});
  const std::size_t per = sample_bytes();
  std::size_t o = 0;
  for (int idx : indices) {
    const std::uint8_t* src = pixels.data() + static_cast<std::size_t>(idx) * per;
    for (std::size_t i = 0; i < per; ++i)
      x.data[o++] = (static_cast<float>(src[i]) / 255.0f - 0.5f) / 0.5f;
  }
  return x;
}

std::vector<int> Dataset::batch_labels(const std::vector<int>& indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (int idx : indices) out.push_back(labels[static_cast<std::size_t>(idx)]);
  return out;
}

namespace {

std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, v)));
}

}  // namespace

Dataset synthetic_two_class(std::uint64_t seed, int n, int size) {
  Dataset d;
  d.width = d.height = size;
  d.channels = 3;
  d.num_classes = 2;
  Rng rng(derive_seed(seed, 0x326332ull));
  d.pixels.resize(static_cast<std::size_t>(n) * d.sample_bytes());
  d.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int cls = i % 2;
    d.labels[static_cast<std::size_t>(i)] = cls;
    const double cx = rng.uniform(size * 0.3, size * 0.7);
    const double cy = rng.uniform(size * 0.3, size * 0.7);
    std::uint8_t* img = d.pixels.data() + static_cast<std::size_t>(i) * d.sample_bytes();
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          double v = 96.0 + 24.0 * rng.normal();
          if (cls == 0) {
            const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            if (r2 < size * size / 16.0) v += 110.0;
          } else {
            if (((x + y) / 3) % 2 == 0) v += 90.0;
          }
          img[(static_cast<std::size_t>(c) * size + y) * size + x] = clamp_u8(v);
        }
  }
  return d;
}

Dataset synthetic_ten_class(std::uint64_t seed, int n, int size) {
  Dataset d;
  d.width = d.height = size;
  d.channels = 3;
  d.num_classes = 10;
  Rng rng(derive_seed(seed, 0x313063ull));
  d.pixels.resize(static_cast<std::size_t>(n) * d.sample_bytes());
  d.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int cls = i % 10;
    d.labels[static_cast<std::size_t>(i)] = cls;
    // Class identity = orientation (5 bins) x spatial frequency (2 close
    // bins); a random distractor grating and heavy pixel noise make the
    // margins thin enough for a tiny backbone to underfit.
    const double angle = (cls / 2) * (M_PI / 5.0) + rng.uniform(-0.16, 0.16);
    const double freq = (cls % 2 == 0 ? 0.75 : 1.01) * rng.uniform(0.96, 1.04);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    const double contrast = rng.uniform(0.35, 0.68);
    const double dc = rng.uniform(-18.0, 18.0);
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double d_angle = rng.uniform(0.0, M_PI);
    const double d_freq = rng.uniform(0.6, 1.2);
    const double d_phase = rng.uniform(0.0, 2.0 * M_PI);
    const double dca = std::cos(d_angle), dsa = std::sin(d_angle);
    const double tint[3] = {rng.uniform(-14.0, 14.0), rng.uniform(-14.0, 14.0),
                            rng.uniform(-14.0, 14.0)};
    std::uint8_t* img = d.pixels.data() + static_cast<std::size_t>(i) * d.sample_bytes();
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double u = ca * x + sa * y;
        const double g = std::sin(freq * u + phase);
        const double distract = std::sin(d_freq * (dca * x + dsa * y) + d_phase);
        const double base = 128.0 + dc + 46.0 * contrast * g + 19.0 * distract;
        for (int c = 0; c < 3; ++c) {
          const double v = base + tint[c] + 41.0 * rng.normal();
          img[(static_cast<std::size_t>(c) * size + y) * size + x] = clamp_u8(v);
        }
      }
  }
  return d;
}

Dataset open_dataset(const std::string& spec) {
  if (spec.rfind("synthetic2:", 0) == 0 || spec.rfind("synthetic10:", 0) == 0) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.size() < 3) throw ConfigError("synthetic spec needs <kind>:<seed>:<n>");
    const std::uint64_t seed = std::stoull(parts[1]);
    const int n = std::stoi(parts[2]);
    const int size = parts.size() > 3 ? std::stoi(parts[3]) : (parts[0] == "synthetic2" ? 16 : 32);
    return parts[0] == "synthetic2" ? synthetic_two_class(seed, n, size)
                                    : synthetic_ten_class(seed, n, size);
  }
  return load_dataset(spec);
}

namespace {

constexpr char kMagic[4] = {'R', 'I', 'M', 'G'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, std::size_t offset, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw FormatError(std::string("truncated ") + what, offset);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_dataset(const Dataset& d, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream index(fs::path(dir) / "index.tsv");
  if (!index) throw Error("cannot create index in " + dir);
  const std::size_t per = d.sample_bytes();
  for (int i = 0; i < d.size(); ++i) {
    const int cls = d.labels[static_cast<std::size_t>(i)];
    char cls_dir[32];
    std::snprintf(cls_dir, sizeof cls_dir, "class_%04d", cls);
    fs::create_directories(fs::path(dir) / cls_dir);
    char name[48];
    std::snprintf(name, sizeof name, "%s/img_%06d.rimg", cls_dir, i);
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(d.width));
    put_u32(out, static_cast<std::uint32_t>(d.height));
    put_u32(out, static_cast<std::uint32_t>(d.channels));
    out.write(reinterpret_cast<const char*>(d.pixels.data() + static_cast<std::size_t>(i) * per),
              static_cast<std::streamsize>(per));
    if (!out) throw Error(std::string("failed writing ") + name);
    index << name << '\t' << cls << '\n';
  }
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream index(fs::path(dir) / "index.tsv");
  if (!index) throw FormatError("missing index.tsv in " + dir);
  Dataset d;
  std::string line;
  std::size_t row = 0;
  std::size_t listed = 0;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    ++listed;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError("index row " + std::to_string(row) + " has no label column");
    const std::string rel = line.substr(0, tab);
    const int cls = std::stoi(line.substr(tab + 1));
    ++row;

    std::ifstream in(fs::path(dir) / rel, std::ios::binary);
    if (!in) throw FormatError("index names a missing file: " + rel);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
      throw FormatError("bad magic in " + rel, 0);
    const std::uint32_t version = get_u32(in, 4, "version");
    if (version != kVersion) throw FormatError("unsupported container version in " + rel, 4);
    const int w = static_cast<int>(get_u32(in, 8, "width"));
    const int h = static_cast<int>(get_u32(in, 12, "height"));
    const int c = static_cast<int>(get_u32(in, 16, "channels"));
    if (w <= 0 || h <= 0 || c <= 0 || w > 4096 || h > 4096 || c > 16)
      throw FormatError("implausible dimensions in " + rel, 8);
    if (d.width == 0) {
      d.width = w;
      d.height = h;
      d.channels = c;
    } else if (w != d.width || h != d.height || c != d.channels) {
      throw FormatError("image size differs from the rest of the dataset: " + rel, 8);
    }
    const std::size_t per = d.sample_bytes();
    const std::size_t at = d.pixels.size();
    d.pixels.resize(at + per);
    if (!in.read(reinterpret_cast<char*>(d.pixels.data() + at),
                 static_cast<std::streamsize>(per)))
      throw FormatError("truncated pixel payload in " + rel, 20);
    d.labels.push_back(cls);
    d.num_classes = std::max(d.num_classes, cls + 1);
  }
  if (listed != d.labels.size() || d.labels.empty())
    throw FormatError("index count does not match loaded images (" +
                      std::to_string(d.labels.size()) + " loaded)");
  return d;
}

Dataset slice_dataset(const Dataset& d, int from, int to) {
  if (from < 0 || to > d.size() || from >= to) throw ConfigError("bad dataset slice");
  Dataset out;
  out.width = d.width;
  out.height = d.height;
  out.channels = d.channels;
  out.num_classes = d.num_classes;
  const std::size_t per = d.sample_bytes();
  out.pixels.assign(d.pixels.begin() + static_cast<std::ptrdiff_t>(from * per),
                    d.pixels.begin() + static_cast<std::ptrdiff_t>(to * per));
  out.labels.assign(d.labels.begin() + from, d.labels.begin() + to);
  return out;
}

}  // namespace mfnn
