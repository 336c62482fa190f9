#pragma once

#include <array>
#include <string>
#include <vector>

namespace partmotion {

// Whole-body motion: frame-major feature matrix plus its layout id.
struct Motion {
  int frames = 0;
  int width = 0;
  std::string layout;
  std::vector<double> values;  // frames x width, row-major

  double& at(int frame, int col) { return values[static_cast<size_t>(frame) * width + col]; }
  double at(int frame, int col) const { return values[static_cast<size_t>(frame) * width + col]; }
};

struct PartMotion {
  std::string part_name;
  int frames = 0;
  int width = 0;
  std::vector<double> values;

  double& at(int frame, int col) { return values[static_cast<size_t>(frame) * width + col]; }
  double at(int frame, int col) const { return values[static_cast<size_t>(frame) * width + col]; }
};

struct PartDescriptor {
  std::string name;
  std::vector<int> columns;
};

struct SharedColumn {
  int column = 0;
  std::vector<int> owner_parts;  // indices into PartitionScheme::parts
};

struct PartitionScheme {
  std::vector<PartDescriptor> parts;
  std::vector<SharedColumn> shared_columns;
};

inline constexpr int kNumParts = 6;
// Fixed canonical part order; token grids, checkpoints and the coordination
// concatenation all follow it.
extern const std::array<const char*, kNumParts> kPartOrder;

struct ValidationReport {
  bool ok = true;
  std::vector<std::string> violations;
};

// Layout "joints3d-v1": 4 root channels (rotational velocity, planar linear
// velocity x/z, height) then 3 local-xyz columns per non-root joint.
inline constexpr int kJoints3dV1NonRootJoints = 21;
inline constexpr int kJoints3dV1Width = 4 + 3 * kJoints3dV1NonRootJoints;
inline constexpr const char* kJoints3dV1 = "joints3d-v1";

// Width declared by a known layout id, or -1 for unknown layouts.
int layout_width(const std::string& layout_id);

// Default six-part scheme for the 22-joint skeleton on joints3d-v1. Joint 9
// belongs to both arms and the backbone (three owners per column).
PartitionScheme default_smpl22_scheme();

ValidationReport validate_scheme(const PartitionScheme& scheme, int width);

// Throws std::invalid_argument on scheme/layout mismatch.
std::vector<PartMotion> split(const Motion& whole, const PartitionScheme& scheme);

// Shared columns take the mean of their owners' predictions; when all owners
// agree the value is copied, so merge(split(m)) round-trips bit-exactly.
Motion merge(const std::vector<PartMotion>& parts, const PartitionScheme& scheme,
             const std::string& layout);

// Scheme file: one `<name>: i0,i1,...` line per part; shared columns are
// inferred from duplicates. Parts are reordered to the canonical order.
PartitionScheme parse_scheme_text(const std::string& text);
PartitionScheme load_scheme_file(const std::string& path);
std::string scheme_to_text(const PartitionScheme& scheme);

}  // namespace partmotion
