#include "partmotion/partition.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace partmotion {

const std::array<const char*, kNumParts> kPartOrder = {"R.Leg", "L.Leg",    "R.Arm",
                                                       "L.Arm", "Backbone", "Root"};

int layout_width(const std::string& layout_id) {
  if (layout_id == kJoints3dV1) return kJoints3dV1Width;
  return -1;
}

namespace {

std::vector<int> joint_columns(const std::vector<int>& joints) {
  // joint 0 is the pelvis; its motion lives in the root channel block and it
  // contributes no xyz columns of its own
  std::vector<int> cols;
  for (int j : joints) {
    if (j == 0) continue;
    const int base = 4 + 3 * (j - 1);
    cols.push_back(base);
    cols.push_back(base + 1);
    cols.push_back(base + 2);
  }
  return cols;
}

void infer_shared(PartitionScheme& scheme) {
  std::map<int, std::vector<int>> owners;
  for (size_t p = 0; p < scheme.parts.size(); ++p)
    for (int c : scheme.parts[p].columns) owners[c].push_back(static_cast<int>(p));
  scheme.shared_columns.clear();
  for (const auto& [col, own] : owners)
    if (own.size() > 1) scheme.shared_columns.push_back({col, own});
}

}  // namespace

PartitionScheme default_smpl22_scheme() {
  PartitionScheme s;
  s.parts.push_back({"R.Leg", joint_columns({2, 5, 8, 11})});
  s.parts.push_back({"L.Leg", joint_columns({1, 4, 7, 10})});
  s.parts.push_back({"R.Arm", joint_columns({9, 14, 17, 19, 21})});
  s.parts.push_back({"L.Arm", joint_columns({9, 13, 16, 18, 20})});
  s.parts.push_back({"Backbone", joint_columns({0, 3, 6, 9, 12, 15})});
  s.parts.push_back({"Root", {0, 1, 2, 3}});
  infer_shared(s);
  return s;
}

ValidationReport validate_scheme(const PartitionScheme& scheme, int width) {
  ValidationReport rep;
  auto fail = [&rep](const std::string& msg) {
    rep.ok = false;
    rep.violations.push_back(msg);
  };

  if (static_cast<int>(scheme.parts.size()) != kNumParts)
    fail("expected " + std::to_string(kNumParts) + " parts, got " +
         std::to_string(scheme.parts.size()));

  std::set<std::string> want(kPartOrder.begin(), kPartOrder.end());
  std::set<std::string> got;
  for (const auto& p : scheme.parts) got.insert(p.name);
  if (got != want) {
    for (const auto& n : got)
      if (!want.count(n)) fail("unknown part name '" + n + "'");
    for (const auto& n : want)
      if (!got.count(n)) fail("missing part '" + n + "'");
  }

  std::map<int, int> owner_count;
  for (const auto& p : scheme.parts) {
    if (p.columns.empty()) fail("part '" + p.name + "' has an empty column list");
    for (int c : p.columns) {
      if (c < 0 || c >= width)
        fail("part '" + p.name + "' references column " + std::to_string(c) +
             " outside [0, " + std::to_string(width) + ")");
      else
        ++owner_count[c];
    }
  }
  for (int c = 0; c < width; ++c)
    if (!owner_count.count(c)) fail("uncovered column " + std::to_string(c));

  std::set<int> registered;
  for (const auto& sc : scheme.shared_columns) registered.insert(sc.column);
  for (const auto& [c, n] : owner_count) {
    if (n > 1 && !registered.count(c)) fail("unregistered shared column " + std::to_string(c));
    if (n == 1 && registered.count(c))
      fail("column " + std::to_string(c) + " registered as shared but has one owner");
  }
  return rep;
}

std::vector<PartMotion> split(const Motion& whole, const PartitionScheme& scheme) {
  auto rep = validate_scheme(scheme, whole.width);
  if (!rep.ok)
    throw std::invalid_argument("split: scheme does not match layout: " + rep.violations.front());

  std::vector<PartMotion> out;
  out.reserve(scheme.parts.size());
  for (const auto& p : scheme.parts) {
    PartMotion pm;
    pm.part_name = p.name;
    pm.frames = whole.frames;
    pm.width = static_cast<int>(p.columns.size());
    pm.values.resize(static_cast<size_t>(pm.frames) * pm.width);
    for (int f = 0; f < whole.frames; ++f)
      for (size_t i = 0; i < p.columns.size(); ++i)
        pm.at(f, static_cast<int>(i)) = whole.at(f, p.columns[i]);
    out.push_back(std::move(pm));
  }
  return out;
}

Motion merge(const std::vector<PartMotion>& parts, const PartitionScheme& scheme,
             const std::string& layout) {
  if (parts.size() != scheme.parts.size())
    throw std::invalid_argument("merge: expected " + std::to_string(scheme.parts.size()) +
                                " parts, got " + std::to_string(parts.size()));
  const int frames = parts.empty() ? 0 : parts[0].frames;
  int width = 0;
  for (size_t p = 0; p < parts.size(); ++p) {
    if (parts[p].frames != frames) throw std::invalid_argument("merge: frame-count mismatch");
    if (parts[p].part_name != scheme.parts[p].name)
      throw std::invalid_argument("merge: part '" + parts[p].part_name +
                                  "' does not match scheme order ('" + scheme.parts[p].name + "')");
    if (parts[p].width != static_cast<int>(scheme.parts[p].columns.size()))
      throw std::invalid_argument("merge: width mismatch for part '" + parts[p].part_name + "'");
    for (int c : scheme.parts[p].columns) width = std::max(width, c + 1);
  }

  // column -> list of (part index, local column)
  std::vector<std::vector<std::pair<int, int>>> sources(width);
  for (size_t p = 0; p < scheme.parts.size(); ++p) {
    const auto& cols = scheme.parts[p].columns;
    for (size_t i = 0; i < cols.size(); ++i)
      sources[cols[i]].emplace_back(static_cast<int>(p), static_cast<int>(i));
  }
  for (int c = 0; c < width; ++c)
    if (sources[c].empty()) throw std::invalid_argument("merge: scheme leaves column uncovered");

  Motion m;
  m.frames = frames;
  m.width = width;
  m.layout = layout;
  m.values.resize(static_cast<size_t>(frames) * width);
  for (int f = 0; f < frames; ++f) {
    for (int c = 0; c < width; ++c) {
      const auto& src = sources[c];
      if (src.size() == 1) {
        m.at(f, c) = parts[src[0].first].at(f, src[0].second);
        continue;
      }
      // shared column: average the owners' predictions, but copy when they
      // all agree so that merge(split(m)) is bit-exact
      const double first = parts[src[0].first].at(f, src[0].second);
      bool agree = true;
      double sum = first;
      for (size_t i = 1; i < src.size(); ++i) {
        const double v = parts[src[i].first].at(f, src[i].second);
        agree = agree && v == first;
        sum += v;
      }
      m.at(f, c) = agree ? first : sum / static_cast<double>(src.size());
    }
  }
  return m;
}

PartitionScheme parse_scheme_text(const std::string& text) {
  PartitionScheme s;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      if (line.find_first_not_of(" \t\r\n") != std::string::npos)
        throw std::invalid_argument("scheme: malformed line '" + line + "'");
      continue;
    }
    PartDescriptor pd;
    pd.name = line.substr(0, colon);
    pd.name.erase(0, pd.name.find_first_not_of(" \t"));
    pd.name.erase(pd.name.find_last_not_of(" \t") + 1);
    std::string rest = line.substr(colon + 1);
    for (auto& ch : rest)
      if (ch == ',') ch = ' ';
    std::istringstream cols(rest);
    int c;
    while (cols >> c) pd.columns.push_back(c);
    if (pd.name.empty() || pd.columns.empty())
      throw std::invalid_argument("scheme: malformed line '" + line + "'");
    s.parts.push_back(std::move(pd));
  }
  // canonical order when the names allow it
  std::vector<PartDescriptor> ordered;
  for (const char* name : kPartOrder) {
    for (auto& p : s.parts)
      if (p.name == name) ordered.push_back(std::move(p));
  }
  if (ordered.size() == s.parts.size()) s.parts = std::move(ordered);
  infer_shared(s);
  return s;
}

PartitionScheme load_scheme_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scheme file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scheme_text(ss.str());
}

std::string scheme_to_text(const PartitionScheme& scheme) {
  std::ostringstream out;
  for (const auto& p : scheme.parts) {
    out << p.name << ": ";
    for (size_t i = 0; i < p.columns.size(); ++i) {
      if (i) out << ',';
      out << p.columns[i];
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace partmotion
