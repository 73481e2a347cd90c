#include "mfnn/serialize.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace mfnn {

namespace {

std::array<std::uint32_t, 256> make_crc_table() {
  std::array<std::uint32_t, 256> t{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
    t[i] = c;
  }
  return t;
}

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t n, std::uint32_t seed) {
  static const auto table = make_crc_table();
  std::uint32_t c = seed ^ 0xffffffffu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

void Writer::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void Writer::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void Writer::f32(float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  u32(bits);
}

void Writer::f64(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  u64(bits);
}

void Writer::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}

void Writer::tensor(const Tensor& t) {
  u32(static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) u32(static_cast<std::uint32_t>(d));
  for (float v : t.data) f32(v);
}

void Writer::bytes(const std::vector<std::uint8_t>& b) {
  u64(b.size());
  buf_.insert(buf_.end(), b.begin(), b.end());
}

void Writer::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(buf_.data()),
            static_cast<std::streamsize>(buf_.size()));
  const std::uint32_t c = crc32(buf_.data(), buf_.size());
  for (int i = 0; i < 4; ++i) {
    const char b = static_cast<char>((c >> (8 * i)) & 0xff);
    out.write(&b, 1);
  }
  if (!out) throw Error("failed writing " + path);
}

Reader Reader::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (data.size() < 4) throw FormatError("file too short for a checksum", data.size());
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i)
    stored |= static_cast<std::uint32_t>(data[data.size() - 4 + i]) << (8 * i);
  data.resize(data.size() - 4);
  const std::uint32_t actual = crc32(data.data(), data.size());
  if (stored != actual) throw FormatError("checksum mismatch in " + path, data.size());
  return Reader(std::move(data));
}

void Reader::need(std::size_t n, const char* what) {
  if (at_ + n > buf_.size()) throw FormatError(std::string("truncated ") + what, at_);
}

std::uint8_t Reader::u8() {
  need(1, "u8");
  return buf_[at_++];
}

std::uint32_t Reader::u32() {
  need(4, "u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[at_++]) << (8 * i);
  return v;
}

std::uint64_t Reader::u64() {
  need(8, "u64");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[at_++]) << (8 * i);
  return v;
}

float Reader::f32() {
  const std::uint32_t bits = u32();
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

double Reader::f64() {
  const std::uint64_t bits = u64();
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string Reader::str() {
  const std::uint32_t n = u32();
  need(n, "string payload");
  std::string s(reinterpret_cast<const char*>(buf_.data() + at_), n);
  at_ += n;
  return s;
}

Tensor Reader::tensor() {
  const std::uint32_t nd = u32();
  if (nd > 8) throw FormatError("implausible tensor rank", at_ - 4);
  std::vector<int> shape;
  for (std::uint32_t i = 0; i < nd; ++i) shape.push_back(static_cast<int>(u32()));
  Tensor t(shape);
  for (auto& v : t.data) v = f32();
  return t;
}

std::vector<std::uint8_t> Reader::bytes() {
  const std::uint64_t n = u64();
  need(n, "byte payload");
  std::vector<std::uint8_t> b(buf_.begin() + static_cast<std::ptrdiff_t>(at_),
                              buf_.begin() + static_cast<std::ptrdiff_t>(at_ + n));
  at_ += n;
  return b;
}

void write_remap_bank(Writer& w, const RemapBank& bank) {
  w.u32(static_cast<std::uint32_t>(bank.nets.size()));
  for (const auto& [dim, net] : bank.nets) {
    w.u32(static_cast<std::uint32_t>(dim));
    w.tensor(net.w1);
    w.tensor(net.b1);
    w.tensor(net.w2);
    w.tensor(net.b2);
    w.u8(net.frozen ? 1 : 0);
  }
  w.f64(bank.prior.location);
  w.f64(bank.prior.scale);
  w.f64(bank.source_stats.mean);
  w.f64(bank.source_stats.stddev);
}

RemapBank read_remap_bank(Reader& r) {
  RemapBank bank;
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    const int dim = static_cast<int>(r.u32());
    RemapNet net;
    net.dim = dim;
    net.w1 = r.tensor();
    net.b1 = r.tensor();
    net.w2 = r.tensor();
    net.b2 = r.tensor();
    net.frozen = r.u8() != 0;
    bank.nets[dim] = std::move(net);
  }
  bank.prior.location = r.f64();
  bank.prior.scale = r.f64();
  bank.source_stats.mean = r.f64();
  bank.source_stats.stddev = r.f64();
  return bank;
}

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x4b43464du;  // "MFCK"
constexpr std::uint32_t kCheckpointVersion = 1;

void write_specs(Writer& w, const Checkpoint& meta) {
  w.u32(static_cast<std::uint32_t>(meta.arch.in_channels));
  w.u32(static_cast<std::uint32_t>(meta.arch.resolution));
  w.u32(static_cast<std::uint32_t>(meta.arch.num_classes));
  w.u32(static_cast<std::uint32_t>(meta.arch.stem_channels));
  w.u32(static_cast<std::uint32_t>(meta.arch.stem_stride));
  w.u8(meta.arch.act == ActKind::ReLU ? 0 : 1);
  w.u32(static_cast<std::uint32_t>(meta.arch.blocks.size()));
  for (const auto& b : meta.arch.blocks) {
    w.u32(static_cast<std::uint32_t>(b.out_ch));
    w.f64(b.expand);
    w.u32(static_cast<std::uint32_t>(b.stride));
    w.u32(static_cast<std::uint32_t>(b.kernel));
  }
  w.f64(meta.aug.width_multiple);
  w.f64(meta.aug.expand_multiple);
  w.u8(meta.aug.homogeneous ? 1 : 0);
  w.str(to_string(meta.families.stem));
  w.u32(static_cast<std::uint32_t>(meta.families.blocks.size()));
  for (OpFamily f : meta.families.blocks) w.str(to_string(f));
  w.str(to_string(meta.families.head));
  w.u32(static_cast<std::uint32_t>(meta.quant.p_min + 1000));
  w.u32(static_cast<std::uint32_t>(meta.quant.p_max + 1000));
  w.u8(meta.hws.mode == RemapMode::Identity ? 0 : (meta.hws.mode == RemapMode::Bias ? 1 : 2));
  w.f64(meta.hws.shift_prior.location);
  w.f64(meta.hws.shift_prior.scale);
  w.f64(meta.hws.add_prior.location);
  w.f64(meta.hws.add_prior.scale);
  w.u64(meta.model_seed);
  w.u8(meta.mutation_done ? 1 : 0);
}

Checkpoint read_specs(Reader& r) {
  Checkpoint meta;
  meta.arch.in_channels = static_cast<int>(r.u32());
  meta.arch.resolution = static_cast<int>(r.u32());
  meta.arch.num_classes = static_cast<int>(r.u32());
  meta.arch.stem_channels = static_cast<int>(r.u32());
  meta.arch.stem_stride = static_cast<int>(r.u32());
  meta.arch.act = r.u8() == 0 ? ActKind::ReLU : ActKind::HSwish;
  const std::uint32_t nb = r.u32();
  for (std::uint32_t i = 0; i < nb; ++i) {
    BlockSpec b;
    b.out_ch = static_cast<int>(r.u32());
    b.expand = r.f64();
    b.stride = static_cast<int>(r.u32());
    b.kernel = static_cast<int>(r.u32());
    meta.arch.blocks.push_back(b);
  }
  meta.aug.width_multiple = r.f64();
  meta.aug.expand_multiple = r.f64();
  meta.aug.homogeneous = r.u8() != 0;
  meta.families.stem = family_from_string(r.str());
  const std::uint32_t nf = r.u32();
  for (std::uint32_t i = 0; i < nf; ++i)
    meta.families.blocks.push_back(family_from_string(r.str()));
  meta.families.head = family_from_string(r.str());
  meta.quant.p_min = static_cast<int>(r.u32()) - 1000;
  meta.quant.p_max = static_cast<int>(r.u32()) - 1000;
  const std::uint8_t mode = r.u8();
  meta.hws.mode =
      mode == 0 ? RemapMode::Identity : (mode == 1 ? RemapMode::Bias : RemapMode::Direct);
  meta.hws.shift_prior.location = r.f64();
  meta.hws.shift_prior.scale = r.f64();
  meta.hws.add_prior.location = r.f64();
  meta.hws.add_prior.scale = r.f64();
  meta.model_seed = r.u64();
  meta.mutation_done = r.u8() != 0;
  return meta;
}

void for_each_bn(AugModel& m, const std::function<void(AugBN&)>& fn) {
  fn(m.stem_bn);
  for (auto& blk : m.blocks()) {
    if (blk.has_expand) fn(blk.bn1);
    fn(blk.bn2);
    fn(blk.bn3);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const AugModel& m, const SgdOptimizer& opt,
                     const Checkpoint& meta) {
  Writer w;
  w.u32(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(meta.epoch);
  w.i64(meta.step);
  write_specs(w, meta);

  AugModel& mm = const_cast<AugModel&>(m);
  auto params = mm.params();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.str(p.name);
    w.tensor(*p.tensor);
  }
  std::uint32_t bn_count = 0;
  for_each_bn(mm, [&](AugBN&) { ++bn_count; });
  w.u32(bn_count);
  for_each_bn(mm, [&](AugBN& bn) {
    w.str(bn.name);
    w.tensor(bn.target_stats.running_mean);
    w.tensor(bn.target_stats.running_var);
    w.tensor(bn.aug_stats.running_mean);
    w.tensor(bn.aug_stats.running_var);
  });
  const auto& bufs = const_cast<SgdOptimizer&>(opt).momentum_buffers();
  w.u32(static_cast<std::uint32_t>(bufs.size()));
  for (const auto& b : bufs) w.tensor(b);
  w.i64(opt.step_count());
  write_remap_bank(w, m.shift_bank);
  write_remap_bank(w, m.add_bank);
  w.save(path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  Reader r = Reader::from_file(path);
  if (r.u32() != kCheckpointMagic) throw FormatError("not a checkpoint file", 0);
  if (r.u32() != kCheckpointVersion) throw FormatError("unsupported checkpoint version", 4);
  LoadedCheckpoint out;
  out.meta.epoch = r.u32();
  out.meta.step = r.i64();
  const Checkpoint specs = read_specs(r);
  out.meta.arch = specs.arch;
  out.meta.aug = specs.aug;
  out.meta.families = specs.families;
  out.meta.quant = specs.quant;
  out.meta.hws = specs.hws;
  out.meta.model_seed = specs.model_seed;
  out.meta.mutation_done = specs.mutation_done;

  out.model = AugModel(specs.arch, specs.aug, specs.families, specs.quant, specs.hws,
                       specs.model_seed);
  auto params = out.model.params();
  const std::uint32_t np = r.u32();
  if (np != params.size()) throw FormatError("parameter count mismatch", r.offset());
  for (auto& p : params) {
    const std::string name = r.str();
    if (name != p.name) throw FormatError("parameter order mismatch at " + name, r.offset());
    Tensor t = r.tensor();
    require_same_shape(t, *p.tensor, "checkpoint parameter");
    *p.tensor = std::move(t);
  }
  const std::uint32_t nbn = r.u32();
  std::uint32_t seen = 0;
  for_each_bn(out.model, [&](AugBN& bn) {
    const std::string name = r.str();
    if (name != bn.name) throw FormatError("bn order mismatch at " + name, r.offset());
    bn.target_stats.running_mean = r.tensor();
    bn.target_stats.running_var = r.tensor();
    bn.aug_stats.running_mean = r.tensor();
    bn.aug_stats.running_var = r.tensor();
    ++seen;
  });
  if (seen != nbn) throw FormatError("bn buffer count mismatch", r.offset());
  const std::uint32_t nm = r.u32();
  for (std::uint32_t i = 0; i < nm; ++i) out.momentum.push_back(r.tensor());
  out.optimizer_step = r.i64();
  out.model.shift_bank = read_remap_bank(r);
  out.model.add_bank = read_remap_bank(r);
  out.model.set_hws_mode(out.meta.hws.mode);  // rewires bank pointers
  if (!out.meta.mutation_done) {
    // Mutation state is a function of the step count; the trainer re-applies
    // pending flips, so reset blocks to their multiplicative start.
    for (int i = 0; i < out.model.block_count(); ++i)
      out.model.blocks()[static_cast<std::size_t>(i)].set_family(OpFamily::Mult);
  }
  return out;
}

}  // namespace mfnn
