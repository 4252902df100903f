#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "otsa/ascm.hpp"
#include "otsa/positioning.hpp"

namespace otsa {

struct LabeledSample {
    std::string id;
    SarImage image;
    TargetMask mask;
    int label = 0;
};

struct SynthConfig {
    int num_classes = 4;
    int images_per_class = 60;
    int image_size = 128;
    double speckle_strength = 0.35;  // 0 = noiseless, 1 = full exponential speckle
    std::uint64_t seed = 1;

    void validate() const;  // num_classes >= 2, image_size >= 32
};

// One bright convex polygonal target per image (class-specific template with
// random rotation/scale/translation) on a dark background, a contiguous
// shadow extruded from the target away from the fixed illumination direction,
// multiplicative unit-mean exponential speckle, pixels normalized to [0, 1].
// The mask marks exactly the target polygon's pixels.
std::vector<LabeledSample> generate_synthetic_dataset(const SynthConfig& config);

struct CroppedSample {
    SarImage image;
    TargetMask mask;
};

// Centered crop; offsets floor((dim - size)/2); mask coordinates translated,
// out-of-crop coordinates dropped. Throws parameter_error if the image is
// smaller than size.
CroppedSample center_crop(const SarImage& image, const TargetMask& mask, int size = 88);

// Uniformly random valid offsets; deterministic per seed.
CroppedSample random_crop(const SarImage& image, const TargetMask& mask, int size,
                          std::uint64_t seed);

// Fallback segmentation when no mask file exists: pixels >= t * max, largest
// 4-connected component kept. All-zero images give an empty mask.
TargetMask threshold_segment(const SarImage& image, double threshold_fraction);

// 16-bit binary PGM (P5, big-endian samples) with a JSON sidecar at
// path + ".json" holding {"scale", "width", "height"}; pixel = sample/65535 *
// scale. Negative pixels clamp to 0 on save (the sidecar carries no offset).
void save_image(const SarImage& image, const std::string& path);
SarImage load_image(const std::string& path);

// Binary PBM (P4); bit 1 = target pixel. Exact round-trip.
void save_mask(const TargetMask& mask, const std::string& path);
TargetMask load_mask(const std::string& path);

// Manifest: JSON list of {id, image_path, mask_path, label}. Paths are
// resolved relative to the manifest's directory on load.
struct ManifestEntry {
    std::string id;
    std::string image_path;
    std::string mask_path;
    int label = 0;
};
void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);
std::vector<ManifestEntry> load_manifest(const std::string& path);
LabeledSample load_sample(const ManifestEntry& entry, const std::string& base_dir);

// Phoenix-style header parser for MSTAR files (optional feature; image
// samples are not decoded). data_offset comes from the declared
// PhoenixHeaderLength.
struct MstarHeader {
    std::map<std::string, std::string> fields;
    std::size_t data_offset = 0;
    std::optional<int> columns;
    std::optional<int> rows;
};
MstarHeader parse_mstar_header(const std::vector<std::uint8_t>& bytes);

}  // namespace otsa
