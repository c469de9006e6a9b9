#include "sinet/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace sinet {

std::string task_name(Task task) { return task == Task::kAction ? "action" : "caption"; }

Task parse_task(const std::string& name) {
  if (name == "action") return Task::kAction;
  if (name == "caption") return Task::kCaption;
  throw ConfigError("unknown task '" + name + "' (expected action or caption)");
}

// ---------------------------------------------------------------------------
// Blobs

namespace {

constexpr char kMagic[4] = {'S', 'I', 'N', 'T'};
constexpr std::uint8_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

template <typename T>
constexpr DType dtype_of() {
  return std::is_same_v<T, float> ? DType::kF32 : DType::kF64;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void read_exact(std::istream& in, void* dst, std::size_t n, const std::string& name, const char* what) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError("blob '" + name + "': truncated " + what);
  }
}

template <typename Src, typename T>
void read_payload(std::istream& in, Tensor<T>& out, const std::string& name) {
  if constexpr (std::is_same_v<Src, T>) {
    read_exact(in, out.data(), out.size() * sizeof(T), name, "payload");
  } else {
    std::vector<Src> raw(out.size());
    read_exact(in, raw.data(), raw.size() * sizeof(Src), name, "payload");
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<T>(raw[i]);
  }
}

}  // namespace

template <typename T>
void write_blob(std::ostream& out, const Tensor<T>& t) {
  if (t.rank() > 255) throw ShapeError("blob: rank too large");
  out.write(kMagic, 4);
  const unsigned char head[3] = {kVersion, static_cast<unsigned char>(dtype_of<T>()),
                                 static_cast<unsigned char>(t.rank())};
  out.write(reinterpret_cast<const char*>(head), 3);
  for (std::size_t d : t.shape()) {
    if (d > 0xffffffffu) throw ShapeError("blob: extent exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
}

template <typename T>
void write_blob(const std::string& path, const Tensor<T>& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write blob '" + path + "'");
  write_blob(out, t);
  if (!out) throw IoError("write failed for blob '" + path + "'");
}

template <typename T>
Tensor<T> read_blob(std::istream& in, const std::string& name) {
  char magic[4];
  read_exact(in, magic, 4, name, "header");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("blob '" + name + "': bad magic");
  unsigned char head[3];
  read_exact(in, head, 3, name, "header");
  if (head[0] != kVersion) {
    throw FormatError("blob '" + name + "': unsupported version " + std::to_string(head[0]));
  }
  if (head[1] > 1) throw FormatError("blob '" + name + "': unknown dtype " + std::to_string(head[1]));
  Shape shape(head[2]);
  for (std::size_t& d : shape) {
    unsigned char b[4];
    read_exact(in, b, 4, name, "header");
    d = static_cast<std::size_t>(b[0]) | static_cast<std::size_t>(b[1]) << 8 |
        static_cast<std::size_t>(b[2]) << 16 | static_cast<std::size_t>(b[3]) << 24;
  }
  Tensor<T> out(shape);
  if (static_cast<DType>(head[1]) == DType::kF32) {
    read_payload<float>(in, out, name);
  } else {
    read_payload<double>(in, out, name);
  }
  return out;
}

template <typename T>
Tensor<T> read_blob(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open blob '" + path + "'");
  Tensor<T> t = read_blob<T>(in, path);
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("blob '" + path + "': trailing bytes");
  return t;
}

DType blob_dtype(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open blob '" + path + "'");
  char head[6];
  read_exact(in, head, 6, path, "header");
  if (std::memcmp(head, kMagic, 4) != 0) throw FormatError("blob '" + path + "': bad magic");
  if (head[5] > 1) throw FormatError("blob '" + path + "': unknown dtype");
  return static_cast<DType>(head[5]);
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(t);
}

void Vocabulary::add(const std::string& token) {
  ids_.emplace(token, tokens_.size());
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<Sentence>& corpus, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const Sentence& s : corpus)
    for (const std::string& w : s) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> order(counts.begin(), counts.end());
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [w, c] : order) {
    if (c >= min_count && !v.contains(w)) v.add(w);
  }
  return v;
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) {
    throw VocabError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(size()));
  }
  return tokens_[id];
}

std::vector<std::size_t> Vocabulary::encode(const Sentence& sentence) const {
  std::vector<std::size_t> out = {kBos};
  for (const std::string& w : sentence) out.push_back(id(w));
  out.push_back(kEos);
  return out;
}

Sentence Vocabulary::decode(const std::vector<std::size_t>& ids) const {
  Sentence out;
  for (std::size_t i : ids) {
    if (i == kEos) break;
    if (i == kBos || i == kPad) continue;
    out.push_back(token(i));
  }
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary '" + path + "'");
  for (const std::string& t : tokens_) out << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary '" + path + "'");
  Vocabulary v;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (n < kReserved) {
      if (line != v.tokens_[n]) throw FormatError("vocabulary '" + path + "': reserved entries out of place");
    } else {
      if (line.empty() || v.contains(line)) {
        throw FormatError("vocabulary '" + path + "' line " + std::to_string(n + 1) + ": empty or repeated token");
      }
      v.add(line);
    }
    ++n;
  }
  if (n < kReserved) throw FormatError("vocabulary '" + path + "': missing reserved entries");
  return v;
}

Sentence tokenize(const std::string& text) {
  Sentence out;
  std::istringstream in(text);
  std::string w;
  while (in >> w) {
    for (char& ch : w) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    out.push_back(w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::string resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).string();
}

std::string frame_blob_name(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.blob", t);
  return buf;
}

}  // namespace

Manifest Manifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  const fs::path base = fs::path(path).parent_path();
  Manifest m;
  m.path = path;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    const std::string where = "manifest '" + path + "' line " + std::to_string(lineno);
    if (fields.size() != 4) {
      throw FormatError(where + ": expected 4 tab-separated fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw FormatError(where + ": empty video id");
    if (!ids.insert(fields[0]).second) throw FormatError(where + ": duplicate video id '" + fields[0] + "'");
    ManifestEntry e{lineno, fields[0], resolve(base, fields[1]), resolve(base, fields[2]), fields[3]};
    if (!fs::is_regular_file(e.frames_path)) throw IoError(where + ": missing frame blob '" + e.frames_path + "'");
    if (!fs::is_directory(e.objects_dir)) {
      throw IoError(where + ": missing object directory '" + e.objects_dir + "'");
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

template <typename T>
VideoSample<T> load_sample(const ManifestEntry& entry, Task task, const Vocabulary* vocab) {
  const std::string where = "manifest line " + std::to_string(entry.line) + " ('" + entry.id + "')";
  VideoSample<T> v;
  v.id = entry.id;
  v.frames = read_blob<T>(entry.frames_path);
  if (v.frames.rank() != 2 || v.frames.shape()[0] == 0) {
    throw FormatError(where + ": frame blob must be [T x m] with T >= 1, got " + shape_string(v.frames.shape()));
  }
  const std::size_t m = v.frames.shape()[1];
  for (std::size_t t = 0; t < v.frames.shape()[0]; ++t) {
    const std::string p = (fs::path(entry.objects_dir) / frame_blob_name(t)).string();
    if (!fs::is_regular_file(p)) throw IoError(where + ": missing object blob '" + p + "'");
    Tensor<T> o = read_blob<T>(p);
    if (o.size() == 0) o = Tensor<T>({0, m});
    if (o.rank() != 2 || o.shape()[1] != m) {
      throw FormatError(where + ": object blob '" + p + "' must be [N x " + std::to_string(m) + "]");
    }
    v.objects.push_back(std::move(o));
    v.masks.emplace_back();
  }
  if (task == Task::kAction) {
    std::size_t label = 0;
    std::size_t used = 0;
    try {
      label = std::stoul(entry.field, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != entry.field.size()) {
      throw FormatError(where + ": label '" + entry.field + "' is not a class id");
    }
    v.label = label;
  } else {
    if (!vocab) throw ConfigError("load_sample: caption task needs a vocabulary");
    v.caption = vocab->encode(tokenize(entry.field));
  }
  return v;
}

template <typename T>
Dataset<T> load_dataset(const Manifest& manifest, Task task, Vocabulary vocab) {
  Dataset<T> data;
  if (task == Task::kCaption) {
    for (const ManifestEntry& e : manifest.entries) data.captions.push_back(tokenize(e.field));
    data.vocab = vocab.size() > Vocabulary::kReserved ? std::move(vocab) : Vocabulary::build(data.captions);
  }
  for (const ManifestEntry& e : manifest.entries) {
    data.samples.push_back(load_sample<T>(e, task, &data.vocab));
    if (data.samples.back().label) data.num_classes = std::max(data.num_classes, *data.samples.back().label + 1);
  }
  return data;
}

template <typename T>
void write_dataset(const std::string& dir, const Dataset<T>& data, Task task) {
  fs::create_directories(fs::path(dir) / "videos");
  std::ofstream manifest(fs::path(dir) / "manifest.tsv", std::ios::trunc);
  if (!manifest) throw IoError("cannot write manifest in '" + dir + "'");
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const VideoSample<T>& v = data.samples[i];
    const fs::path rel = fs::path("videos") / v.id;
    fs::create_directories(fs::path(dir) / rel / "objects");
    write_blob((fs::path(dir) / rel / "frames.blob").string(), v.frames);
    const std::size_t m = v.feature_dim();
    for (std::size_t t = 0; t < v.timesteps(); ++t) {
      Tensor<T> kept({v.valid_objects(t), m});
      std::size_t row = 0;
      for (std::size_t n = 0; n < v.objects[t].rows(); ++n) {
        if (!v.object_valid(t, n)) continue;
        std::copy_n(v.objects[t].data() + n * m, m, kept.data() + row * m);
        ++row;
      }
      write_blob((fs::path(dir) / rel / "objects" / frame_blob_name(t)).string(), kept);
    }
    std::string field;
    if (task == Task::kAction) {
      if (!v.label) throw LabelError("write_dataset: video '" + v.id + "' has no label");
      field = std::to_string(*v.label);
    } else {
      const Sentence words = i < data.captions.size() ? data.captions[i] : data.vocab.decode(v.caption);
      for (std::size_t w = 0; w < words.size(); ++w) field += (w ? " " : "") + words[w];
    }
    manifest << v.id << '\t' << (rel / "frames.blob").string() << '\t' << (rel / "objects").string() << '\t'
             << field << '\n';
  }
  if (!manifest) throw IoError("write failed for manifest in '" + dir + "'");
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

Tensor<double> gaussian_rows(std::size_t rows, std::size_t dim, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Tensor<double> out({rows, dim});
  for (double& v : out.storage()) v = n01(rng);
  return out;
}

void add_noisy_row(const Tensor<double>& protos, std::size_t row, double noise, Rng& rng, double* dst) {
  std::normal_distribution<double> n01(0.0, 1.0);
  const std::size_t m = protos.shape()[1];
  for (std::size_t j = 0; j < m; ++j) dst[j] = protos[row * m + j] + (noise > 0 ? noise * n01(rng) : 0.0);
}

std::size_t half_up(std::size_t t) { return (t + 1) / 2; }

// Frames that carry the planted content: a random subset of size in
// [ceil(T/2), T], or [ceil(T/2), T-1] when `proper` is set.
std::vector<bool> planted_frames(std::size_t T, Rng& rng, bool all, bool proper = false) {
  std::vector<bool> planted(T, false);
  std::uniform_int_distribution<std::size_t> count(half_up(T), proper ? std::max(half_up(T), T - 1) : T);
  const std::size_t p = all ? T : count(rng);
  std::vector<std::size_t> order(T);
  for (std::size_t t = 0; t < T; ++t) order[t] = t;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < p; ++i) planted[order[i]] = true;
  return planted;
}

bool near_miss_allowed(const TriadConfig& cfg, Rng& rng) {
  return cfg.decoy_rate >= 1.0 || std::bernoulli_distribution(cfg.decoy_rate)(rng);
}

// Three members of class k with one member missing and another duplicated:
// the same per-class object count as the full triple, never the triple.
void push_near_miss(const std::array<std::size_t, 3>& triple, Rng& rng, std::vector<std::size_t>& ids) {
  std::uniform_int_distribution<std::size_t> pick3(0, 2);
  std::uniform_int_distribution<std::size_t> pick2(0, 1);
  const std::size_t missing = pick3(rng);
  std::size_t kept[2];
  std::size_t n = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    if (s != missing) kept[n++] = triple[s];
  }
  ids.push_back(kept[0]);
  ids.push_back(kept[1]);
  ids.push_back(kept[pick2(rng)]);
}

template <typename T>
std::vector<VideoSample<T>> triad_split(const TriadConfig& cfg, const TriadWorld& world, std::size_t count,
                                        const std::string& prefix, Rng& rng) {
  const std::size_t m = cfg.dim;
  const std::size_t T_ = cfg.timesteps;
  const bool with_foil = cfg.objects >= 6;
  std::vector<std::size_t> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = i % cfg.classes;
  std::shuffle(labels.begin(), labels.end(), rng);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_foil(0, cfg.classes - 2);
  std::bernoulli_distribution coin(0.5);
  std::vector<VideoSample<T>> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t c = labels[i];
    std::size_t foil = pick_foil(rng);
    if (foil >= c) ++foil;
    const std::size_t tag = coin(rng) ? 1 : 0;
    const bool all = cfg.distractors == 0 && !with_foil;
    const std::vector<bool> planted = planted_frames(T_, rng, all);
    const std::vector<bool> foil_frames = with_foil ? planted_frames(T_, rng, false) : std::vector<bool>(T_, false);
    std::vector<double> scene(m);
    for (double& s : scene) s = n01(rng);
    Tensor<double> frames({T_, m});
    for (std::size_t t = 0; t < T_; ++t)
      for (std::size_t j = 0; j < m; ++j) frames[t * m + j] = scene[j] + world.tags[tag * m + j] + cfg.noise * n01(rng);
    VideoSample<double> v;
    v.id = prefix + std::to_string(i);
    v.label = c;
    for (std::size_t t = 0; t < T_; ++t) {
      // (prototype, tag) per slot; near-misses and distractors draw their tag at random
      std::vector<std::pair<std::size_t, std::size_t>> slots;
      std::vector<std::size_t> ids;
      auto push_group = [&](std::size_t fixed_tag, bool random_tag) {
        for (std::size_t id : ids) slots.push_back({id, random_tag ? (coin(rng) ? 1u : 0u) : fixed_tag});
        ids.clear();
      };
      if (planted[t]) {
        ids.assign(world.triples[c].begin(), world.triples[c].end());
        push_group(tag, false);
      } else if (cfg.objects >= 3 && near_miss_allowed(cfg, rng)) {
        push_near_miss(world.triples[c], rng, ids);
        push_group(tag, true);
      }
      if (with_foil) {
        if (foil_frames[t]) {
          ids.assign(world.triples[foil].begin(), world.triples[foil].end());
          push_group(1 - tag, false);
        } else if (cfg.objects - slots.size() >= 3 && near_miss_allowed(cfg, rng)) {
          push_near_miss(world.triples[foil], rng, ids);
          push_group(1 - tag, true);
        }
      }
      while (slots.size() < cfg.objects) {
        if (cfg.distractors > 0) {
          std::uniform_int_distribution<std::size_t> d(0, cfg.distractors - 1);
          ids.push_back(3 * cfg.classes + d(rng));
          push_group(0, true);
        } else {
          std::uniform_int_distribution<std::size_t> d(0, slots.size() - 1);
          slots.push_back(slots[d(rng)]);
        }
      }
      std::shuffle(slots.begin(), slots.end(), rng);
      Tensor<double> objs({cfg.objects, m});
      for (std::size_t n = 0; n < slots.size(); ++n) {
        double* dst = objs.data() + n * m;
        add_noisy_row(world.prototypes, slots[n].first, cfg.noise, rng, dst);
        for (std::size_t j = 0; j < m; ++j) dst[j] += world.tags[slots[n].second * m + j];
      }
      v.objects.push_back(std::move(objs));
      v.masks.emplace_back();
    }
    v.frames = std::move(frames);
    out.push_back(v.template cast<T>());
  }
  return out;
}

}  // namespace

void TriadConfig::validate() const {
  if (classes < 2) throw ConfigError("triad: need at least 2 classes");
  if (objects < 3) throw ConfigError("triad: frames need room for 3 objects");
  if (timesteps < 1 || dim < 1) throw ConfigError("triad: timesteps and dim must be positive");
  if (!(noise >= 0)) throw ConfigError("triad: noise must be non-negative");
  if (!(decoy_rate >= 0 && decoy_rate <= 1)) throw ConfigError("triad: decoy_rate must lie in [0, 1]");
}

TriadWorld triad_world(const TriadConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ull + 0x7472696164ull);
  TriadWorld w;
  w.prototypes = gaussian_rows(cfg.prototypes(), cfg.dim, rng);
  w.tags = gaussian_rows(2, cfg.dim, rng);
  for (double& x : w.tags.storage()) x *= cfg.tag_scale;
  for (std::size_t c = 0; c < cfg.classes; ++c) w.triples.push_back({3 * c, 3 * c + 1, 3 * c + 2});
  return w;
}

template <typename T>
SplitDataset<T> synth_triad(const TriadConfig& cfg) {
  const TriadWorld world = triad_world(cfg);
  Rng rng(cfg.seed * 0xD1B54A32D192ED03ull + 0x73616d706c65ull);
  SplitDataset<T> out;
  out.train.samples = triad_split<T>(cfg, world, cfg.train, "triad_train_", rng);
  out.val.samples = triad_split<T>(cfg, world, cfg.val, "triad_val_", rng);
  out.train.num_classes = out.val.num_classes = cfg.classes;
  return out;
}

void CaptionSynthConfig::validate() const {
  if (subjects < 1 || verbs < 1 || objects_words < 1) throw ConfigError("caption synth: word lists must be non-empty");
  if (subjects > 8 || verbs > 8 || objects_words > 8) throw ConfigError("caption synth: at most 8 words per slot");
  if (objects < 2) throw ConfigError("caption synth: frames need room for 2 objects");
  if (objects > 2 && distractors == 0) throw ConfigError("caption synth: free object slots need distractors");
  if (timesteps < 1 || dim < 1) throw ConfigError("caption synth: timesteps and dim must be positive");
  if (!(noise >= 0)) throw ConfigError("caption synth: noise must be non-negative");
}

CaptionWorld caption_world(const CaptionSynthConfig& cfg) {
  cfg.validate();
  static const char* kSubjects[] = {"man", "woman", "boy", "girl", "dog", "cat", "chef", "player"};
  static const char* kVerbs[] = {"kicks", "holds", "throws", "chases", "carries", "pushes", "drops", "catches"};
  static const char* kObjects[] = {"ball", "box", "chair", "bottle", "frisbee", "bag", "rope", "stick"};
  CaptionWorld w;
  w.subjects.assign(kSubjects, kSubjects + cfg.subjects);
  w.verbs.assign(kVerbs, kVerbs + cfg.verbs);
  w.objects.assign(kObjects, kObjects + cfg.objects_words);
  Rng rng(cfg.seed * 0x9E3779B97F4A7C15ull + 0x63617074ull);
  w.subject_protos = gaussian_rows(cfg.subjects, cfg.dim, rng);
  w.object_protos = gaussian_rows(cfg.objects_words, cfg.dim, rng);
  w.verb_scenes = gaussian_rows(cfg.verbs, cfg.dim, rng);
  w.distractors = gaussian_rows(cfg.distractors, cfg.dim, rng);
  return w;
}

template <typename T>
SplitDataset<T> synth_caption(const CaptionSynthConfig& cfg) {
  const CaptionWorld world = caption_world(cfg);
  Rng rng(cfg.seed * 0xD1B54A32D192ED03ull + 0x73656e74ull);
  const std::size_t m = cfg.dim;
  std::uniform_int_distribution<std::size_t> subj(0, cfg.subjects - 1);
  std::uniform_int_distribution<std::size_t> verb(0, cfg.verbs - 1);
  std::uniform_int_distribution<std::size_t> obj(0, cfg.objects_words - 1);
  std::normal_distribution<double> n01(0.0, 1.0);

  auto make_split = [&](std::size_t count, const std::string& prefix, Dataset<T>& data) {
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t s = subj(rng);
      const std::size_t v = verb(rng);
      const std::size_t o = obj(rng);
      VideoSample<double> video;
      video.id = prefix + std::to_string(i);
      video.frames = Tensor<double>({cfg.timesteps, m});
      for (std::size_t t = 0; t < cfg.timesteps; ++t)
        add_noisy_row(world.verb_scenes, v, cfg.noise, rng, video.frames.data() + t * m);
      const std::vector<bool> planted = planted_frames(cfg.timesteps, rng, false);
      for (std::size_t t = 0; t < cfg.timesteps; ++t) {
        // -1 subject, -2 object, otherwise a distractor row
        std::vector<long> ids;
        if (planted[t]) ids = {-1, -2};
        while (ids.size() < cfg.objects) {
          std::uniform_int_distribution<long> d(0, static_cast<long>(cfg.distractors) - 1);
          ids.push_back(d(rng));
        }
        std::shuffle(ids.begin(), ids.end(), rng);
        Tensor<double> objs({cfg.objects, m});
        for (std::size_t n = 0; n < ids.size(); ++n) {
          double* dst = objs.data() + n * m;
          if (ids[n] == -1) {
            add_noisy_row(world.subject_protos, s, cfg.noise, rng, dst);
          } else if (ids[n] == -2) {
            add_noisy_row(world.object_protos, o, cfg.noise, rng, dst);
          } else {
            add_noisy_row(world.distractors, static_cast<std::size_t>(ids[n]), cfg.noise, rng, dst);
          }
        }
        video.objects.push_back(std::move(objs));
        video.masks.emplace_back();
      }
      data.samples.push_back(video.template cast<T>());
      data.captions.push_back({"a", world.subjects[s], world.verbs[v], "a", world.objects[o]});
    }
  };

  SplitDataset<T> out;
  make_split(cfg.train, "caption_train_", out.train);
  make_split(cfg.val, "caption_val_", out.val);
  // Every template word gets an id even when a split never uses it.
  std::vector<Sentence> corpus = out.train.captions;
  Sentence all_words = {"a"};
  for (const auto* list : {&world.subjects, &world.verbs, &world.objects})
    all_words.insert(all_words.end(), list->begin(), list->end());
  corpus.push_back(all_words);
  const Vocabulary vocab = Vocabulary::build(corpus);
  for (Dataset<T>* d : {&out.train, &out.val}) {
    d->vocab = vocab;
    for (std::size_t i = 0; i < d->samples.size(); ++i) d->samples[i].caption = vocab.encode(d->captions[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

template <typename T>
void save_checkpoint(const std::string& dir, const ConfigMap& config, const TensorList<T>& params,
                     const TensorList<T>& optim) {
  const fs::path root(dir);
  fs::create_directories(root / "params");
  if (!optim.empty()) fs::create_directories(root / "optim");
  config.save((root / "config.txt").string());
  for (const NamedTensor<T>& p : params) write_blob((root / "params" / (p.name + ".blob")).string(), *p.tensor);
  for (const NamedTensor<T>& p : optim) write_blob((root / "optim" / (p.name + ".blob")).string(), *p.tensor);
}

ConfigMap read_checkpoint_config(const std::string& dir) {
  const fs::path file = fs::path(dir) / "config.txt";
  if (!fs::is_regular_file(file)) throw CheckpointError("checkpoint '" + dir + "' has no config.txt");
  return ConfigMap::load(file.string());
}

namespace {

template <typename T>
void load_named(const fs::path& dir, const TensorList<T>& list) {
  for (const NamedTensor<T>& p : list) {
    const fs::path file = dir / (p.name + ".blob");
    if (!fs::is_regular_file(file)) throw CheckpointError("checkpoint is missing '" + file.string() + "'");
    Tensor<T> t = read_blob<T>(file.string());
    if (t.shape() != p.tensor->shape()) {
      throw CheckpointError("checkpoint tensor '" + p.name + "' is " + shape_string(t.shape()) + ", model expects " +
                            shape_string(p.tensor->shape()));
    }
    *p.tensor = std::move(t);
  }
}

}  // namespace

template <typename T>
void load_checkpoint(const std::string& dir, const ConfigMap& expected, const TensorList<T>& params,
                     const TensorList<T>& optim) {
  const ConfigMap stored = read_checkpoint_config(dir);
  for (const auto& [key, value] : expected.values()) {
    const std::string have = stored.get_string(key, "<missing>");
    if (have != value) {
      throw CheckpointError("checkpoint '" + dir + "': " + key + "=" + have + " but the model has " + key + "=" +
                            value);
    }
  }
  load_named(fs::path(dir) / "params", params);
  if (!optim.empty()) load_named(fs::path(dir) / "optim", optim);
}

#define SINET_INSTANTIATE_DATAIO(T)                                                                       \
  template void write_blob<T>(std::ostream&, const Tensor<T>&);                                           \
  template void write_blob<T>(const std::string&, const Tensor<T>&);                                      \
  template Tensor<T> read_blob<T>(std::istream&, const std::string&);                                    \
  template Tensor<T> read_blob<T>(const std::string&);                                                    \
  template VideoSample<T> load_sample<T>(const ManifestEntry&, Task, const Vocabulary*);                  \
  template Dataset<T> load_dataset<T>(const Manifest&, Task, Vocabulary);                                 \
  template void write_dataset<T>(const std::string&, const Dataset<T>&, Task);                            \
  template SplitDataset<T> synth_triad<T>(const TriadConfig&);                                            \
  template SplitDataset<T> synth_caption<T>(const CaptionSynthConfig&);                                   \
  template void save_checkpoint<T>(const std::string&, const ConfigMap&, const TensorList<T>&,            \
                                   const TensorList<T>&);                                                 \
  template void load_checkpoint<T>(const std::string&, const ConfigMap&, const TensorList<T>&,            \
                                   const TensorList<T>&);

SINET_INSTANTIATE_DATAIO(float)
SINET_INSTANTIATE_DATAIO(double)

#undef SINET_INSTANTIATE_DATAIO

}  // namespace sinet
