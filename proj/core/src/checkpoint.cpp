#include "gait/checkpoint.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace gait {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian");

namespace {

constexpr char kMagic[4] = {'G', 'A', 'I', 'T'};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& key) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw IoError("checkpoint manifest: bad float for key " + key + ": " + s);
  }
  return v;
}

int64_t parse_i64(const std::string& s, const std::string& key) {
  char* end = nullptr;
  long long v = std::strtoll(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') {
    throw IoError("checkpoint manifest: bad integer for key " + key + ": " + s);
  }
  return static_cast<int64_t>(v);
}

uint64_t parse_u64(const std::string& s, const std::string& key) {
  char* end = nullptr;
  unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') {
    throw IoError("checkpoint manifest: bad integer for key " + key + ": " + s);
  }
  return static_cast<uint64_t>(v);
}

std::string build_manifest(const Checkpoint& c) {
  std::ostringstream os;
  os << "step = " << c.step << '\n';
  os << "seed = " << c.config.seed << '\n';
  os << "batch_size = " << c.config.batch_size << '\n';
  os << "steps = " << c.config.steps << '\n';
  os << "image_size = " << c.config.image_size << '\n';
  os << "checkpoint_every = " << c.config.checkpoint_every << '\n';
  os << "lambda_cyc = " << fmt_double(c.config.weights.lambda_cyc) << '\n';
  os << "lambda_grad = " << fmt_double(c.config.weights.lambda_grad) << '\n';
  os << "c_ga = " << fmt_double(c.config.weights.c_ga) << '\n';
  os << "adam.lr = " << fmt_double(c.config.adam.lr) << '\n';
  os << "adam.beta1 = " << fmt_double(c.config.adam.beta1) << '\n';
  os << "adam.beta2 = " << fmt_double(c.config.adam.beta2) << '\n';
  os << "adam.eps = " << fmt_double(c.config.adam.eps) << '\n';
  os << "gen.in_channels = " << c.config.gen.in_channels << '\n';
  os << "gen.base_channels = " << c.config.gen.base_channels << '\n';
  os << "gen.n_res_blocks = " << c.config.gen.n_res_blocks << '\n';
  os << "gen.n_downsample = " << c.config.gen.n_downsample << '\n';
  os << "gen.image_size = " << c.config.gen.image_size << '\n';
  os << "disc.in_channels = " << c.config.disc.in_channels << '\n';
  os << "disc.base_channels = " << c.config.disc.base_channels << '\n';
  os << "disc.n_layers = " << c.config.disc.n_layers << '\n';
  os << "disc.image_size = " << c.config.disc.image_size << '\n';
  os << "adam_gen.t = " << c.adam_gen.t << '\n';
  os << "adam_disc.t = " << c.adam_disc.t << '\n';
  return os.str();
}

void apply_manifest(Checkpoint& c, const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto pos = line.find(" = ");
    if (pos == std::string::npos) throw IoError("checkpoint manifest: bad line: " + line);
    kv.emplace(line.substr(0, pos), line.substr(pos + 3));
  }
  auto take = [&kv](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw IoError("checkpoint manifest: missing key " + key);
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  c.step = parse_i64(take("step"), "step");
  c.config.seed = parse_u64(take("seed"), "seed");
  c.config.batch_size = static_cast<int>(parse_i64(take("batch_size"), "batch_size"));
  c.config.steps = parse_i64(take("steps"), "steps");
  c.config.image_size = static_cast<int>(parse_i64(take("image_size"), "image_size"));
  c.config.checkpoint_every = parse_i64(take("checkpoint_every"), "checkpoint_every");
  c.config.weights.lambda_cyc = parse_double(take("lambda_cyc"), "lambda_cyc");
  c.config.weights.lambda_grad = parse_double(take("lambda_grad"), "lambda_grad");
  c.config.weights.c_ga = parse_double(take("c_ga"), "c_ga");
  c.config.adam.lr = parse_double(take("adam.lr"), "adam.lr");
  c.config.adam.beta1 = parse_double(take("adam.beta1"), "adam.beta1");
  c.config.adam.beta2 = parse_double(take("adam.beta2"), "adam.beta2");
  c.config.adam.eps = parse_double(take("adam.eps"), "adam.eps");
  c.config.gen.in_channels = static_cast<int>(parse_i64(take("gen.in_channels"), "gen.in_channels"));
  c.config.gen.base_channels = static_cast<int>(parse_i64(take("gen.base_channels"), "gen.base_channels"));
  c.config.gen.n_res_blocks = static_cast<int>(parse_i64(take("gen.n_res_blocks"), "gen.n_res_blocks"));
  c.config.gen.n_downsample = static_cast<int>(parse_i64(take("gen.n_downsample"), "gen.n_downsample"));
  c.config.gen.image_size = static_cast<int>(parse_i64(take("gen.image_size"), "gen.image_size"));
  c.config.disc.in_channels = static_cast<int>(parse_i64(take("disc.in_channels"), "disc.in_channels"));
  c.config.disc.base_channels = static_cast<int>(parse_i64(take("disc.base_channels"), "disc.base_channels"));
  c.config.disc.n_layers = static_cast<int>(parse_i64(take("disc.n_layers"), "disc.n_layers"));
  c.config.disc.image_size = static_cast<int>(parse_i64(take("disc.image_size"), "disc.image_size"));
  c.adam_gen.t = parse_i64(take("adam_gen.t"), "adam_gen.t");
  c.adam_disc.t = parse_i64(take("adam_disc.t"), "adam_disc.t");
  c.adam_gen.cfg = c.config.adam;
  c.adam_disc.cfg = c.config.adam;
  if (!kv.empty()) {
    throw IoError("checkpoint manifest: unknown key " + kv.begin()->first);
  }
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void write_record(std::ostream& os, const std::string& name, const Tensor& t) {
  write_pod(os, static_cast<uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_pod(os, static_cast<uint32_t>(t.shape().size()));
  for (int64_t d : t.shape()) write_pod(os, static_cast<uint64_t>(d));
  auto v = t.values();
  write_pod(os, static_cast<uint64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

struct Reader {
  std::ifstream in;
  explicit Reader(const std::filesystem::path& p) : in(p, std::ios::binary) {
    if (!in) throw IoError("cannot open checkpoint: " + p.string());
  }
  void bytes(void* dst, size_t n) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n) throw IoError("truncated checkpoint file");
  }
  template <typename T>
  T pod() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
};

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint: " + path.string());
  os.write(kMagic, 4);
  write_pod(os, c.version);
  const std::string manifest = build_manifest(c);
  write_pod(os, static_cast<uint64_t>(manifest.size()));
  os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));

  uint64_t n_records = c.gen_st.size() + c.gen_ts.size() + c.disc_s.size() +
                       c.disc_t.size() + 2 * c.adam_gen.m.size() + 2 * c.adam_disc.m.size();
  write_pod(os, n_records);
  for (const auto& [name, t] : c.gen_st.entries()) write_record(os, "gen_st/" + name, t);
  for (const auto& [name, t] : c.gen_ts.entries()) write_record(os, "gen_ts/" + name, t);
  for (const auto& [name, t] : c.disc_s.entries()) write_record(os, "disc_s/" + name, t);
  for (const auto& [name, t] : c.disc_t.entries()) write_record(os, "disc_t/" + name, t);
  for (const auto& [name, t] : c.adam_gen.m.entries()) write_record(os, "adam_gen.m/" + name, t);
  for (const auto& [name, t] : c.adam_gen.v.entries()) write_record(os, "adam_gen.v/" + name, t);
  for (const auto& [name, t] : c.adam_disc.m.entries()) write_record(os, "adam_disc.m/" + name, t);
  for (const auto& [name, t] : c.adam_disc.v.entries()) write_record(os, "adam_disc.v/" + name, t);
  if (!os) throw IoError("write failure on checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a GAIT checkpoint (bad magic): " + path.string());
  }
  Checkpoint c;
  c.version = r.pod<uint32_t>();
  if (c.version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(c.version) +
                  " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto manifest_len = r.pod<uint64_t>();
  std::string manifest(manifest_len, '\0');
  r.bytes(manifest.data(), manifest_len);
  apply_manifest(c, manifest);

  const auto n_records = r.pod<uint64_t>();
  for (uint64_t i = 0; i < n_records; ++i) {
    const auto name_len = r.pod<uint32_t>();
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    const auto rank = r.pod<uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<int64_t>(r.pod<uint64_t>());
    const auto count = r.pod<uint64_t>();
    if (static_cast<int64_t>(count) != shape_numel(shape)) {
      throw IoError("checkpoint record " + name + ": count does not match shape");
    }
    std::vector<double> data(count);
    r.bytes(data.data(), count * sizeof(double));

    auto pos = name.find('/');
    if (pos == std::string::npos) throw IoError("checkpoint record without section: " + name);
    const std::string section = name.substr(0, pos);
    const std::string rest = name.substr(pos + 1);
    Tensor t(std::move(shape), std::move(data));
    if (section == "gen_st") c.gen_st.add(rest, std::move(t));
    else if (section == "gen_ts") c.gen_ts.add(rest, std::move(t));
    else if (section == "disc_s") c.disc_s.add(rest, std::move(t));
    else if (section == "disc_t") c.disc_t.add(rest, std::move(t));
    else if (section == "adam_gen.m") c.adam_gen.m.add(rest, std::move(t));
    else if (section == "adam_gen.v") c.adam_gen.v.add(rest, std::move(t));
    else if (section == "adam_disc.m") c.adam_disc.m.add(rest, std::move(t));
    else if (section == "adam_disc.v") c.adam_disc.v.add(rest, std::move(t));
    else throw IoError("checkpoint record with unknown section: " + name);
  }
  return c;
}

namespace {

bool param_maps_equal(const ParamMap& a, const ParamMap& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    const auto& [na, ta] = a.entries()[i];
    const auto& [nb, tb] = b.entries()[i];
    if (na != nb || !same_values(ta, tb)) return false;
  }
  return true;
}

}  // namespace

bool checkpoints_equal(const Checkpoint& a, const Checkpoint& b) {
  return a.version == b.version && a.step == b.step && a.config == b.config &&
         param_maps_equal(a.gen_st, b.gen_st) && param_maps_equal(a.gen_ts, b.gen_ts) &&
         param_maps_equal(a.disc_s, b.disc_s) && param_maps_equal(a.disc_t, b.disc_t) &&
         a.adam_gen.t == b.adam_gen.t && a.adam_gen.cfg == b.adam_gen.cfg &&
         param_maps_equal(a.adam_gen.m, b.adam_gen.m) &&
         param_maps_equal(a.adam_gen.v, b.adam_gen.v) &&
         a.adam_disc.t == b.adam_disc.t && a.adam_disc.cfg == b.adam_disc.cfg &&
         param_maps_equal(a.adam_disc.m, b.adam_disc.m) &&
         param_maps_equal(a.adam_disc.v, b.adam_disc.v);
}

}  // namespace gait
