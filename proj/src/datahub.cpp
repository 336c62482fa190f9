#include "partmotion/datahub.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace partmotion {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> read_id_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file: " + path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

std::vector<double> read_float_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<double> vals;
  double v;
  while (in >> v) vals.push_back(v);
  return vals;
}

void write_float_lines(const std::string& path, const std::vector<double>& vals) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (double v : vals) out << format_double(v) << "\n";
}

}  // namespace

Motion read_motion_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open motion file: " + path);
  std::string tag;
  Motion m;
  if (!(in >> tag >> m.frames >> m.width >> m.layout) || tag != "mot-v1")
    throw DataError("bad mot-v1 header in " + path);
  if (m.frames < 0 || m.width <= 0) throw DataError("bad dimensions in " + path);
  const int declared = layout_width(m.layout);
  if (declared > 0 && declared != m.width)
    throw DataError(path + ": width " + std::to_string(m.width) + " does not match layout " +
                    m.layout);
  m.values.resize(static_cast<size_t>(m.frames) * m.width);
  for (size_t i = 0; i < m.values.size(); ++i) {
    if (!(in >> m.values[i])) throw DataError(path + ": truncated frame data");
    if (!std::isfinite(m.values[i])) throw DataError(path + ": non-finite value");
  }
  return m;
}

void write_motion_file(const std::string& path, const Motion& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write motion file: " + path);
  out << "mot-v1 " << m.frames << " " << m.width << " " << m.layout << "\n";
  for (int f = 0; f < m.frames; ++f) {
    for (int c = 0; c < m.width; ++c) {
      if (c) out << '\t';
      out << format_double(m.at(f, c));
    }
    out << '\n';
  }
}

std::string read_prompt_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open text file: " + path);
  std::string line;
  std::getline(in, line);
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  return line;
}

DatasetManifest load_manifest(const std::string& root, const std::string& layout, int min_frames,
                              int max_frames) {
  DatasetManifest man;
  man.root = root;
  man.layout = layout;
  man.min_frames = min_frames;
  man.max_frames = max_frames;
  man.train_ids = read_id_list(root + "/splits/train.txt");
  man.val_ids = read_id_list(root + "/splits/val.txt");
  man.test_ids = read_id_list(root + "/splits/test.txt");
  man.norm.mean = read_float_lines(root + "/norm/mean.txt");
  man.norm.stddev = read_float_lines(root + "/norm/std.txt");
  if (man.norm.mean.size() != man.norm.stddev.size())
    throw DataError("norm mean/std length mismatch under " + root);
  for (double s : man.norm.stddev)
    if (!(s > 0.0)) throw DataError("non-positive std entry under " + root);
  return man;
}

void normalize(Motion& m, const NormStats& n) {
  for (int f = 0; f < m.frames; ++f)
    for (int c = 0; c < m.width; ++c) m.at(f, c) = (m.at(f, c) - n.mean[c]) / n.stddev[c];
}

void denormalize(Motion& m, const NormStats& n) {
  for (int f = 0; f < m.frames; ++f)
    for (int c = 0; c < m.width; ++c) m.at(f, c) = m.at(f, c) * n.stddev[c] + n.mean[c];
}

Dataset ingest(const DatasetManifest& manifest, const std::string& split, int downsample) {
  const std::vector<std::string>* ids = nullptr;
  if (split == "train")
    ids = &manifest.train_ids;
  else if (split == "val")
    ids = &manifest.val_ids;
  else if (split == "test")
    ids = &manifest.test_ids;
  else
    throw DataError("unknown split: " + split);

  Dataset ds;
  ds.layout = manifest.layout;
  ds.norm = manifest.norm;
  for (const auto& id : *ids) {
    Motion m = read_motion_file(manifest.root + "/motions/" + id + ".mot");
    if (static_cast<size_t>(m.width) != manifest.norm.mean.size())
      throw DataError("motion " + id + " width does not match normalization stats");
    if (m.frames < manifest.min_frames) {
      ++ds.report.dropped_short;
      continue;
    }
    if (m.frames > manifest.max_frames) {
      ++ds.report.dropped_long;
      continue;
    }
    const int cropped = m.frames - m.frames % downsample;
    if (cropped != m.frames) {
      m.frames = cropped;
      m.values.resize(static_cast<size_t>(cropped) * m.width);
      ++ds.report.cropped;
    }
    if (m.frames == 0) {
      ++ds.report.dropped_short;
      continue;
    }
    normalize(m, manifest.norm);
    DatasetItem item;
    item.id = id;
    item.prompt = read_prompt_file(manifest.root + "/texts/" + id + ".txt");
    item.motion = std::move(m);
    ds.width = item.motion.width;
    ds.items.push_back(std::move(item));
    ++ds.report.kept;
  }
  if (!ds.items.empty() && ds.width == 0) ds.width = ds.items[0].motion.width;
  return ds;
}

void export_ingested(const Dataset& ds, const std::string& dir) {
  fs::create_directories(dir + "/motions");
  fs::create_directories(dir + "/texts");
  fs::create_directories(dir + "/splits");
  fs::create_directories(dir + "/norm");
  std::ofstream split_out(dir + "/splits/train.txt");
  std::ofstream val_out(dir + "/splits/val.txt");
  std::ofstream test_out(dir + "/splits/test.txt");
  for (const auto& item : ds.items) {
    write_motion_file(dir + "/motions/" + item.id + ".mot", item.motion);
    std::ofstream(dir + "/texts/" + item.id + ".txt") << item.prompt << "\n";
    split_out << item.id << "\n";
  }
  // exported values are already normalized, so the stats are identity
  const int w = ds.width;
  write_float_lines(dir + "/norm/mean.txt", std::vector<double>(w, 0.0));
  write_float_lines(dir + "/norm/std.txt", std::vector<double>(w, 1.0));
}

NormStats compute_normalization(const std::vector<Motion>& motions) {
  if (motions.empty()) throw DataError("compute_normalization: empty split");
  const int w = motions[0].width;
  NormStats n;
  n.mean.assign(w, 0.0);
  n.stddev.assign(w, 0.0);
  int64_t total = 0;
  for (const auto& m : motions) {
    if (m.width != w) throw DataError("compute_normalization: width mismatch");
    for (int f = 0; f < m.frames; ++f)
      for (int c = 0; c < w; ++c) n.mean[c] += m.at(f, c);
    total += m.frames;
  }
  for (int c = 0; c < w; ++c) n.mean[c] /= static_cast<double>(total);
  for (const auto& m : motions)
    for (int f = 0; f < m.frames; ++f)
      for (int c = 0; c < w; ++c) {
        const double d = m.at(f, c) - n.mean[c];
        n.stddev[c] += d * d;
      }
  for (int c = 0; c < w; ++c)
    n.stddev[c] = std::max(std::sqrt(n.stddev[c] / static_cast<double>(total)), 1e-6);
  return n;
}

int whitespace_token_count(const std::string& prompt) {
  std::istringstream in(prompt);
  std::string tok;
  int n = 0;
  while (in >> tok) ++n;
  return n;
}

std::vector<QuartileGroup> text_length_quartiles(std::vector<TextMotionPair> pairs) {
  if (pairs.empty()) throw DataError("text_length_quartiles: empty pair list");
  std::stable_sort(pairs.begin(), pairs.end(), [](const TextMotionPair& a, const TextMotionPair& b) {
    if (a.token_count != b.token_count) return a.token_count < b.token_count;
    return a.id < b.id;
  });
  const int n = static_cast<int>(pairs.size());
  std::vector<QuartileGroup> groups(4);
  int start = 0;
  for (int g = 0; g < 4; ++g) {
    int count = n / 4 + (g < n % 4 ? 1 : 0);
    QuartileGroup& grp = groups[g];
    grp.count = count;
    grp.percentage = 100.0 * count / n;
    int64_t sum = 0;
    for (int i = start; i < start + count; ++i) {
      grp.pairs.push_back(pairs[i]);
      sum += pairs[i].token_count;
    }
    if (count > 0) {
      grp.min_len = grp.pairs.front().token_count;
      grp.max_len = grp.pairs.back().token_count;
      grp.avg_len = static_cast<double>(sum) / count;
    }
    start += count;
  }
  return groups;
}

namespace {

struct MotionClass {
  std::vector<const char*> prompts;
  // amplitude per part in canonical order: R.Leg, L.Leg, R.Arm, L.Arm, Backbone
  double amp[5];
  double root_turn, root_vx, root_vz, crouch;
};

const std::vector<MotionClass>& motion_classes() {
  static const std::vector<MotionClass> classes = {
      {{"wave the left arm while walking forward", "walk forward and wave the left arm",
        "a person walks ahead waving their left arm"},
       {1.0, 1.0, 0.5, 1.5, 0.7},
       0.0, 0.8, 0.0, 0.0},
      {{"wave the right arm while walking forward", "walk forward and wave the right arm"},
       {1.0, 1.0, 1.5, 0.5, 0.7},
       0.0, 0.8, 0.0, 0.0},
      {{"raise both arms and stand still", "stand in place raising both arms overhead"},
       {0.25, 0.25, 1.3, 1.3, 0.6},
       0.0, 0.0, 0.0, 0.0},
      {{"march in place swinging both arms", "swing the arms while marching on the spot",
        "a person marches in place and swings both arms"},
       {1.4, 1.4, 1.0, 1.0, 0.8},
       0.0, 0.0, 0.0, 0.0},
      {{"crouch down slowly keeping the arms low", "slowly crouch with both arms held down"},
       {0.6, 0.6, 0.3, 0.3, 1.0},
       0.0, 0.0, 0.0, 0.45},
      {{"turn around with the arms spread wide", "spin in place with both arms stretched out"},
       {0.7, 0.7, 1.1, 1.1, 0.8},
       0.9, 0.0, 0.0, 0.0},
      {{"step to the side and lean left", "lean to the left while stepping sideways"},
       {1.0, 1.0, 0.6, 0.6, 1.2},
       0.0, 0.0, 0.7, 0.0},
      {{"jog forward pumping both arms", "run ahead while pumping the arms quickly",
        "a person jogs forward pumping both arms"},
       {1.3, 1.3, 1.2, 1.2, 0.9},
       0.0, 1.2, 0.0, 0.0},
  };
  return classes;
}

// which canonical part a non-root joint belongs to, for amplitude selection
int joint_part(int j) {
  switch (j) {
    case 2: case 5: case 8: case 11: return 0;   // R.Leg
    case 1: case 4: case 7: case 10: return 1;   // L.Leg
    case 14: case 17: case 19: case 21: return 2; // R.Arm
    case 13: case 16: case 18: case 20: return 3; // L.Arm
    default: return 4;                            // Backbone (3,6,9,12,15)
  }
}

}  // namespace

void synth_generate(const SynthOptions& opt, const std::string& out_dir) {
  if (opt.n_sequences <= 0) throw DataError("synth: n_sequences must be positive");
  if (opt.frames < 40 || opt.frames > 196)
    throw DataError("synth: frames must lie within the length bounds [40, 196]");

  fs::create_directories(out_dir + "/motions");
  fs::create_directories(out_dir + "/texts");
  fs::create_directories(out_dir + "/splits");
  fs::create_directories(out_dir + "/norm");

  const auto& classes = motion_classes();
  std::vector<Motion> train_motions;
  std::vector<std::string> ids(opt.n_sequences);

  for (int s = 0; s < opt.n_sequences; ++s) {
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "seq%05d", s);
    ids[s] = idbuf;

    Rng rng = derive_rng(opt.seed, "synth-seq", static_cast<uint64_t>(s));
    const auto& cls = classes[rng.uniform_int(classes.size())];
    const double omega = 2.0 * M_PI * rng.uniform(0.06, 0.14);
    const double phi0 = rng.uniform(0.0, 2.0 * M_PI);
    const double jitter = rng.uniform(0.9, 1.1);

    Motion m;
    m.frames = opt.frames;
    m.width = kJoints3dV1Width;
    m.layout = kJoints3dV1;
    m.values.resize(static_cast<size_t>(m.frames) * m.width);
    for (int t = 0; t < m.frames; ++t) {
      const double phi = phi0 + omega * t;
      const double progress = static_cast<double>(t) / m.frames;
      m.at(t, 0) = cls.root_turn * 0.5 * std::sin(0.35 * phi) + 0.02 * rng.normal();
      m.at(t, 1) = cls.root_vx * (0.8 + 0.2 * std::sin(phi)) + 0.02 * rng.normal();
      m.at(t, 2) = cls.root_vz * 0.6 * std::sin(0.5 * phi) + 0.02 * rng.normal();
      m.at(t, 3) = 0.9 - cls.crouch * progress + 0.05 * std::sin(2.0 * phi) + 0.01 * rng.normal();
      for (int j = 1; j <= kJoints3dV1NonRootJoints; ++j) {
        const int part = joint_part(j);
        const double amp = cls.amp[part] * jitter;
        // legs step at twice the global rate on the y channel
        const double ratio = (part <= 1) ? 2.0 : 1.0;
        const int base = 4 + 3 * (j - 1);
        m.at(t, base + 0) = amp * std::sin(phi) + 0.01 * j + 0.08 * rng.normal();
        m.at(t, base + 1) = amp * std::sin(ratio * phi + 0.4 + 0.1 * j) + 0.08 * rng.normal();
        m.at(t, base + 2) =
            0.5 * amp * std::sin(0.5 * phi + 0.8 + 0.05 * j) + 0.08 * rng.normal();
      }
    }

    write_motion_file(out_dir + "/motions/" + ids[s] + ".mot", m);
    Rng prng = derive_rng(opt.seed, "synth-prompt", static_cast<uint64_t>(s));
    std::ofstream(out_dir + "/texts/" + ids[s] + ".txt")
        << cls.prompts[prng.uniform_int(cls.prompts.size())] << "\n";
    train_motions.push_back(std::move(m));  // provisional: filtered to train below
  }

  // deterministic split assignment
  std::vector<int> order(opt.n_sequences);
  for (int i = 0; i < opt.n_sequences; ++i) order[i] = i;
  Rng srng = derive_rng(opt.seed, "synth-splits");
  for (int i = opt.n_sequences - 1; i > 0; --i)
    std::swap(order[i], order[srng.uniform_int(static_cast<uint64_t>(i) + 1)]);
  const int n_train = std::max(1, static_cast<int>(opt.n_sequences * opt.train_fraction));
  const int n_val =
      std::max(opt.n_sequences > 2 ? 1 : 0, static_cast<int>(opt.n_sequences * opt.val_fraction));
  std::ofstream tr(out_dir + "/splits/train.txt"), va(out_dir + "/splits/val.txt"),
      te(out_dir + "/splits/test.txt");
  std::vector<bool> in_train(opt.n_sequences, false);
  for (int i = 0; i < opt.n_sequences; ++i) {
    if (i < n_train) {
      tr << ids[order[i]] << "\n";
      in_train[order[i]] = true;
    } else if (i < n_train + n_val) {
      va << ids[order[i]] << "\n";
    } else {
      te << ids[order[i]] << "\n";
    }
  }

  std::vector<Motion> train_only;
  for (int i = 0; i < opt.n_sequences; ++i)
    if (in_train[i]) train_only.push_back(std::move(train_motions[i]));
  const NormStats norm = compute_normalization(train_only);
  write_float_lines(out_dir + "/norm/mean.txt", norm.mean);
  write_float_lines(out_dir + "/norm/std.txt", norm.stddev);
}

}  // namespace partmotion
