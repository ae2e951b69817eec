#include "reid/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "reid/errors.hpp"
#include "reid/numerics.hpp"

namespace fs = std::filesystem;

namespace reid {

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kQuery: return "query";
    case Split::kGallery: return "gallery";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "query") return Split::kQuery;
  if (s == "gallery") return Split::kGallery;
  throw ParseError("unknown split tag '" + s + "' (expected train|query|gallery)");
}

std::size_t payload_dim(const Payload& p) {
  if (const auto* m = std::get_if<Mat>(&p)) return m->size();
  return std::get<Image>(p).data.size();
}

Mat payload_row(const Payload& p) {
  if (const auto* m = std::get_if<Mat>(&p)) return Mat(1, m->size(), m->storage());
  const auto& img = std::get<Image>(p);
  return Mat(1, img.data.size(), img.data);
}

void Dataset::reindex() {
  std::set<int> pids;
  for (const auto& it : items)
    if (it.split == Split::kTrain) pids.insert(it.pid);
  pid_map.clear();
  int next = 0;
  for (int p : pids) pid_map[p] = next++;
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i].split == s) out.push_back(i);
  return out;
}

std::size_t Dataset::input_dim() const {
  if (items.empty()) return 0;
  return payload_dim(items.front().payload);
}

SplitView split_view(const Dataset& ds, Split s) {
  SplitView v;
  v.item_index = ds.indices(s);
  const std::size_t dim = ds.input_dim();
  v.features = Mat(v.item_index.size(), dim);
  for (std::size_t r = 0; r < v.item_index.size(); ++r) {
    const Item& it = ds.items[v.item_index[r]];
    if (payload_dim(it.payload) != dim)
      throw DatasetError("payloads have inconsistent sizes");
    const Mat row = payload_row(it.payload);
    std::copy(row.values().begin(), row.values().end(), v.features.row(r).begin());
    v.pids.push_back(it.pid);
    v.camids.push_back(it.camid);
  }
  return v;
}

SplitView train_view(const Dataset& ds) {
  SplitView v = split_view(ds, Split::kTrain);
  for (int& p : v.pids) {
    auto it = ds.pid_map.find(p);
    if (it == ds.pid_map.end())
      throw DatasetError("train pid " + std::to_string(p) + " missing from pid map");
    p = it->second;
  }
  return v;
}

void validate(const SynthConfig& cfg) {
  if (cfg.dim < 2) throw ParameterError("synthetic dim must be >= 2");
  if (cfg.num_ids < 2) throw ParameterError("synthetic num_ids must be >= 2");
  if (cfg.samples_per_id < 2)
    throw ParameterError("synthetic samples_per_id must be >= 2");
  if (cfg.cameras < 1) throw ParameterError("synthetic cameras must be >= 1");
  if (cfg.num_train_ids > cfg.num_ids)
    throw ParameterError("num_train_ids exceeds num_ids");
  if (cfg.nuisance_dims >= cfg.dim)
    throw ParameterError("nuisance_dims must leave at least one signal dimension");
  if (cfg.direction_noise < 0.0 || cfg.norm_confound < 0.0 ||
      cfg.inter_id_separation < 0.0 || cfg.camera_shift < 0.0 ||
      cfg.nuisance_scale < 0.0)
    throw ParameterError("synthetic noise parameters must be >= 0");
  if (!(cfg.radius - cfg.norm_confound / 2.0 > 0.0))
    throw ParameterError("radius - norm_confound/2 must be > 0");
}

namespace {

// Unit vector supported on the first `support` of `dim` coordinates.
std::vector<double> random_unit(std::size_t dim, std::size_t support, Rng& rng) {
  std::vector<double> v(dim, 0.0);
  double n = 0.0;
  do {
    for (std::size_t k = 0; k < support; ++k) v[k] = rng.normal();
    n = norm(v);
  } while (n < 1e-12);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace

Dataset gen_synthetic(const SynthConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const std::size_t d = cfg.dim;
  const std::size_t signal = d - cfg.nuisance_dims;
  const auto common = random_unit(d, signal, rng);
  std::vector<std::vector<double>> cam_offset;
  for (std::size_t c = 0; c < cfg.cameras; ++c) {
    auto u = random_unit(d, d, rng);
    for (double& x : u) x *= cfg.camera_shift;
    cam_offset.push_back(std::move(u));
  }
  const double noise_scale = cfg.direction_noise / std::sqrt(static_cast<double>(d));
  const double r_lo = cfg.radius - cfg.norm_confound / 2.0;
  const double r_hi = cfg.radius + cfg.norm_confound / 2.0;

  Dataset ds;
  for (std::size_t pid = 0; pid < cfg.num_ids; ++pid) {
    auto dir = random_unit(d, signal, rng);
    for (std::size_t k = 0; k < d; ++k) dir[k] = common[k] + cfg.inter_id_separation * dir[k];
    const double dn = norm(dir);
    for (double& x : dir) x /= dn;
    const bool train = pid < cfg.num_train_ids;
    std::set<std::size_t> seen_cams;
    for (std::size_t s = 0; s < cfg.samples_per_id; ++s) {
      const std::size_t cam = s % cfg.cameras;
      std::vector<double> v(d);
      for (std::size_t k = 0; k < d; ++k) {
        const double clutter = k >= signal ? cfg.nuisance_scale : noise_scale;
        v[k] = dir[k] + clutter * rng.normal() + cam_offset[cam][k];
      }
      const double scale = rng.uniform(r_lo, r_hi) / norm(v);
      for (double& x : v) x *= scale;
      Item it;
      it.payload = Mat(1, d, std::move(v));
      it.pid = static_cast<int>(pid);
      it.camid = static_cast<int>(cam);
      if (train) {
        it.split = Split::kTrain;
      } else {
        it.split = seen_cams.insert(cam).second ? Split::kQuery : Split::kGallery;
      }
      ds.items.push_back(std::move(it));
    }
  }
  ds.reindex();
  return ds;
}

void write_vector_file(const fs::path& path, std::span<const double> v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  auto put_u64 = [&](std::uint64_t x) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
  };
  put_u64(v.size());
  for (double x : v) put_u64(std::bit_cast<std::uint64_t>(x));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<double> read_vector_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  auto get_u64 = [&](std::uint64_t& x) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) return false;
    x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return true;
  };
  std::uint64_t n = 0;
  if (!get_u64(n)) throw ParseError("'" + path.string() + "': missing length header");
  const auto expected = 8 + 8 * n;
  if (fs::file_size(path) != expected) {
    throw ParseError("'" + path.string() + "': length header says " +
                     std::to_string(n) + " values but file size differs");
  }
  std::vector<double> v(n);
  for (auto& x : v) {
    std::uint64_t bits;
    get_u64(bits);
    x = std::bit_cast<double>(bits);
  }
  return v;
}

void write_image_file(const fs::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw ParameterError("netpbm images need 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << (img.channels == 1 ? "P5" : "P6") << "\n"
      << img.width << " " << img.height << "\n255\n";
  for (double v : img.data) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Image read_image_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  auto token = [&]() {
    std::string t;
    char ch;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
      } else {
        t.push_back(ch);
      }
    }
    return t;
  };
  const std::string magic = token();
  std::size_t channels;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw ParseError("'" + path.string() + "': not a binary PGM/PPM");
  std::size_t w, h;
  int maxval;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw ParseError("'" + path.string() + "': malformed netpbm header");
  }
  if (maxval != 255) throw ParseError("'" + path.string() + "': only maxval 255 supported");
  Image img(h, w, channels);
  for (double& v : img.data) {
    char ch;
    if (!in.get(ch)) throw ParseError("'" + path.string() + "': truncated pixel data");
    v = static_cast<double>(static_cast<unsigned char>(ch)) / 255.0;
  }
  return img;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

int parse_int(const std::string& s, const std::string& where, const char* field) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": " + field + " '" + s + "' is not an integer");
  }
}

Payload read_payload(const fs::path& file) {
  const std::string ext = file.extension().string();
  if (ext == ".f64") {
    auto v = read_vector_file(file);
    const std::size_t n = v.size();
    return Mat(1, n, std::move(v));
  }
  if (ext == ".pgm" || ext == ".ppm") return read_image_file(file);
  throw ParseError("unsupported payload extension '" + ext + "'");
}

std::string default_payload_name(const Item& it, std::size_t index) {
  std::ostringstream os;
  os << "payloads/" << std::setw(6) << std::setfill('0') << index;
  if (std::holds_alternative<Mat>(it.payload)) {
    os << ".f64";
  } else {
    os << (std::get<Image>(it.payload).channels == 1 ? ".pgm" : ".ppm");
  }
  return os.str();
}

}  // namespace

Dataset load_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open manifest '" + manifest.string() + "'");
  const fs::path root = manifest.parent_path();
  std::string line;
  std::size_t lineno = 0;
  auto where = [&] { return manifest.string() + ":" + std::to_string(lineno); };
  if (!std::getline(in, line)) throw ParseError(manifest.string() + ": missing header");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "path,pid,camid,split") {
    throw ParseError(where() + ": expected header 'path,pid,camid,split', got '" +
                     line + "'");
  }
  Dataset ds;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 4) {
      throw ParseError(where() + ": expected 4 fields, got " + std::to_string(f.size()));
    }
    Item it;
    it.path = f[0];
    it.pid = parse_int(f[1], where(), "pid");
    it.camid = parse_int(f[2], where(), "camid");
    try {
      it.split = split_from_string(f[3]);
    } catch (const ParseError& e) {
      throw ParseError(where() + ": " + e.what());
    }
    const fs::path file = root / it.path;
    if (!fs::exists(file)) {
      throw DatasetError(where() + ": payload '" + file.string() + "' does not exist");
    }
    try {
      it.payload = read_payload(file);
    } catch (const Error& e) {
      throw ParseError(where() + ": " + e.what());
    }
    ds.items.push_back(std::move(it));
  }
  ds.reindex();
  return ds;
}

void write_manifest(const Dataset& ds, const fs::path& manifest) {
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot open '" + manifest.string() + "' for writing");
  out << "path,pid,camid,split\n";
  for (const auto& it : ds.items) {
    if (it.path.empty()) throw DatasetError("write_manifest: item without payload path");
    out << it.path << ',' << it.pid << ',' << it.camid << ',' << to_string(it.split) << '\n';
  }
  if (!out) throw IoError("write failed for '" + manifest.string() + "'");
}

void write_pid_map(const Dataset& ds, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "pid,label\n";
  for (const auto& [pid, label] : ds.pid_map) out << pid << ',' << label << '\n';
}

fs::path write_dataset(const Dataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "payloads", ec);
  if (ec) throw IoError("cannot create '" + (dir / "payloads").string() + "': " + ec.message());
  Dataset copy = ds;
  for (std::size_t i = 0; i < copy.items.size(); ++i) {
    Item& it = copy.items[i];
    if (it.path.empty()) it.path = default_payload_name(it, i);
    const fs::path file = dir / it.path;
    fs::create_directories(file.parent_path(), ec);
    if (const auto* m = std::get_if<Mat>(&it.payload)) {
      write_vector_file(file, m->values());
    } else {
      write_image_file(file, std::get<Image>(it.payload));
    }
  }
  const fs::path manifest = dir / "manifest.csv";
  write_manifest(copy, manifest);
  write_pid_map(copy, dir / "pid_map.csv");
  return manifest;
}

void validate(const RandomErasingConfig& cfg) {
  if (!(cfg.probability >= 0.0 && cfg.probability <= 1.0))
    throw ParameterError("random_erasing: probability must be in [0, 1]");
  const auto [alo, ahi] = cfg.area;
  if (!(alo > 0.0 && alo <= ahi && ahi <= 1.0))
    throw ParameterError("random_erasing: area range must satisfy 0 < lo <= hi <= 1");
  const auto [rlo, rhi] = cfg.aspect;
  if (!(rlo > 0.0 && rlo <= rhi))
    throw ParameterError("random_erasing: aspect range must satisfy 0 < lo <= hi");
}

Image random_erasing(const Image& img, const RandomErasingConfig& cfg, Rng& rng) {
  validate(cfg);
  if (cfg.fill == EraseFill::kMean && cfg.channel_mean.size() != img.channels)
    throw ParameterError("random_erasing: channel_mean size does not match image");
  Image out = img;
  if (!rng.bernoulli(cfg.probability)) return out;
  const double area = static_cast<double>(img.height * img.width);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const double target = rng.uniform(cfg.area.first, cfg.area.second) * area;
    const double aspect = rng.uniform(cfg.aspect.first, cfg.aspect.second);
    const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
    if (h == 0 || w == 0 || h >= img.height || w >= img.width) continue;
    const std::size_t y0 = rng.uniform_int(img.height - h + 1);
    const std::size_t x0 = rng.uniform_int(img.width - w + 1);
    for (std::size_t y = y0; y < y0 + h; ++y) {
      for (std::size_t x = x0; x < x0 + w; ++x) {
        for (std::size_t c = 0; c < img.channels; ++c) {
          out.at(y, x, c) =
              cfg.fill == EraseFill::kMean ? cfg.channel_mean[c] : rng.uniform();
        }
      }
    }
    return out;
  }
  return out;
}

Image flip_columns(const Image& img) {
  Image out = img;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c)
        out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

Image horizontal_flip(const Image& img, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("horizontal_flip: p must be in [0, 1]");
  return rng.bernoulli(p) ? flip_columns(img) : img;
}

std::vector<double> channel_mean(const Dataset& ds) {
  std::vector<double> sum;
  double count = 0.0;
  for (const auto& it : ds.items) {
    if (it.split != Split::kTrain) continue;
    const auto* img = std::get_if<Image>(&it.payload);
    if (!img) continue;
    if (sum.empty()) sum.assign(img->channels, 0.0);
    if (img->channels != sum.size()) throw DatasetError("mixed channel counts");
    for (std::size_t i = 0; i < img->data.size(); ++i) sum[i % img->channels] += img->data[i];
    count += static_cast<double>(img->height * img->width);
  }
  for (double& s : sum) s /= count;
  return sum;
}

}  // namespace reid
