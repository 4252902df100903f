#include "otsa/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <json.hpp>

namespace otsa {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Vec2 {
    double x, y;
};

// Convex polygon templates, one per class; vertices counter-clockwise around
// the origin, sized for a 128-pixel scene (scaled down for smaller ones).
std::vector<Vec2> class_template(int cls) {
    std::vector<Vec2> poly;
    switch (cls % 4) {
        case 0: {  // disc-like dodecagon
            const double r = 13.0;
            for (int i = 0; i < 12; ++i) {
                const double a = 2.0 * std::numbers::pi * i / 12.0;
                poly.push_back({r * std::cos(a), r * std::sin(a)});
            }
            break;
        }
        case 1:  // elongated bar
            poly = {{-12, -2}, {12, -2}, {12, 2}, {-12, 2}};
            break;
        case 2: {  // triangle
            const double r = 16.0;
            for (int i = 0; i < 3; ++i) {
                const double a = 2.0 * std::numbers::pi * i / 3.0 + std::numbers::pi / 2.0;
                poly.push_back({r * std::cos(a), r * std::sin(a)});
            }
            break;
        }
        default:  // square
            poly = {{-7, -7}, {7, -7}, {7, 7}, {-7, 7}};
            break;
    }
    // Extra classes reuse the base shapes at growing sizes.
    const double growth = 1.0 + 0.25 * (cls / 4);
    for (Vec2& v : poly) {
        v.x *= growth;
        v.y *= growth;
    }
    return poly;
}

bool inside_convex(const std::vector<Vec2>& poly, double px, double py) {
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[(i + 1) % n];
        const double cross = (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
        if (cross < 0.0) return false;
    }
    return true;
}

}  // namespace

void SynthConfig::validate() const {
    if (num_classes < 2) throw parameter_error("synth: need at least 2 classes");
    if (image_size < 32) throw parameter_error("synth: image size must be >= 32");
    if (images_per_class < 1) throw parameter_error("synth: need at least 1 image per class");
    if (speckle_strength < 0.0 || speckle_strength > 1.0)
        throw parameter_error("synth: speckle strength must lie in [0, 1]");
}

std::vector<LabeledSample> generate_synthetic_dataset(const SynthConfig& config) {
    config.validate();
    const int size = config.image_size;
    const double unit = size / 128.0;  // template coordinates assume a 128 scene
    const int shadow_len = std::max(4, int(std::lround(12 * unit)));
    // Small enough that an 88-crop of a 128 scene always contains the whole
    // target for any valid crop offset.
    const double max_jitter = 5.0 * unit;

    constexpr double kTarget = 0.85;
    constexpr double kBackground = 0.06;
    constexpr double kShadow = 0.015;

    std::vector<LabeledSample> samples;
    samples.reserve(std::size_t(config.num_classes) * config.images_per_class);
    for (int cls = 0; cls < config.num_classes; ++cls) {
        const std::vector<Vec2> base = class_template(cls);
        for (int idx = 0; idx < config.images_per_class; ++idx) {
            const std::string id = "c" + std::to_string(cls) + "_" + std::to_string(idx);
            std::mt19937_64 rng(derive_seed(config.seed, "sample/" + id));
            std::uniform_real_distribution<double> rot_dist(-0.3, 0.3);
            std::uniform_real_distribution<double> scale_dist(0.92, 1.08);
            std::uniform_real_distribution<double> shift_dist(-max_jitter, max_jitter);

            const double rot = rot_dist(rng);
            const double scale = scale_dist(rng) * unit;
            const double cx = size / 2.0 + shift_dist(rng);
            const double cy = size / 2.0 + shift_dist(rng);
            const double cr = std::cos(rot), sr = std::sin(rot);
            std::vector<Vec2> poly = base;
            for (Vec2& v : poly) {
                const double px = scale * (cr * v.x - sr * v.y) + cx;
                const double py = scale * (sr * v.x + cr * v.y) + cy;
                v = {px, py};
            }

            SarImage img(size, size, kBackground);
            std::vector<std::pair<int, int>> mask_coords;
            for (int x = 1; x < size - 1; ++x)
                for (int y = 1; y < size - 1; ++y)
                    if (inside_convex(poly, x, y)) {
                        img.at(x, y) = kTarget;
                        mask_coords.push_back({x, y});
                    }

            // Shadow extruded along +x (illumination from the low-x side):
            // below the lowest target pixel of each occupied column.
            std::vector<int> col_max(size, -1);
            for (auto [x, y] : mask_coords) col_max[y] = std::max(col_max[y], x);
            for (int y = 0; y < size; ++y) {
                if (col_max[y] < 0) continue;
                for (int dx = 1; dx <= shadow_len; ++dx) {
                    const int x = col_max[y] + dx;
                    if (x >= size) break;
                    if (img.at(x, y) != kTarget) img.at(x, y) = kShadow;
                }
            }

            if (config.speckle_strength > 0.0) {
                std::exponential_distribution<double> speckle(1.0);
                for (double& p : img.v)
                    p *= 1.0 - config.speckle_strength +
                         config.speckle_strength * speckle(rng);
            }
            // Fixed-range normalization into [0, 1]: dividing by the random
            // speckle maximum instead would compress the target level by a
            // heavy-tailed factor. Bright speckle tails clip at 1.
            for (double& p : img.v) p = std::min(p / (2.0 * kTarget), 1.0);

            LabeledSample sample;
            sample.id = id;
            sample.label = cls;
            sample.mask = TargetMask::from_coords(size, size, std::move(mask_coords));
            sample.image = std::move(img);
            samples.push_back(std::move(sample));
        }
    }
    return samples;
}

namespace {

CroppedSample crop_at(const SarImage& image, const TargetMask& mask, int size, int off_x,
                      int off_y) {
    CroppedSample out;
    out.image = SarImage(size, size);
    for (int x = 0; x < size; ++x)
        for (int y = 0; y < size; ++y) out.image.at(x, y) = image.at(x + off_x, y + off_y);
    std::vector<std::pair<int, int>> coords;
    for (auto [mx, my] : mask.coords) {
        const int nx = mx - off_x;
        const int ny = my - off_y;
        if (nx >= 0 && nx < size && ny >= 0 && ny < size) coords.push_back({nx, ny});
    }
    out.mask = TargetMask::from_coords(size, size, std::move(coords));
    return out;
}

}  // namespace

CroppedSample center_crop(const SarImage& image, const TargetMask& mask, int size) {
    if (image.m < size || image.n < size)
        throw parameter_error("crop: image smaller than the requested size");
    return crop_at(image, mask, size, (image.m - size) / 2, (image.n - size) / 2);
}

CroppedSample random_crop(const SarImage& image, const TargetMask& mask, int size,
                          std::uint64_t seed) {
    if (image.m < size || image.n < size)
        throw parameter_error("crop: image smaller than the requested size");
    std::mt19937_64 rng(seed);
    const int off_x = int(std::uniform_int_distribution<int>(0, image.m - size)(rng));
    const int off_y = int(std::uniform_int_distribution<int>(0, image.n - size)(rng));
    return crop_at(image, mask, size, off_x, off_y);
}

TargetMask threshold_segment(const SarImage& image, double threshold_fraction) {
    if (!(threshold_fraction > 0.0 && threshold_fraction < 1.0))
        throw parameter_error("segment: threshold fraction must lie in (0, 1)");
    const double peak = image.max_value();
    if (peak <= 0.0) return TargetMask::from_coords(image.m, image.n, {});
    const double cut = threshold_fraction * peak;

    std::vector<int> component(image.v.size(), -1);
    std::vector<std::pair<int, int>> best;
    int next_id = 0;
    for (int sx = 0; sx < image.m; ++sx) {
        for (int sy = 0; sy < image.n; ++sy) {
            const std::size_t start = std::size_t(sx) * image.n + sy;
            if (image.v[start] < cut || component[start] >= 0) continue;
            std::vector<std::pair<int, int>> blob;
            std::deque<std::pair<int, int>> queue{{sx, sy}};
            component[start] = next_id;
            while (!queue.empty()) {
                auto [x, y] = queue.front();
                queue.pop_front();
                blob.push_back({x, y});
                constexpr int dx[] = {1, -1, 0, 0};
                constexpr int dy[] = {0, 0, 1, -1};
                for (int d = 0; d < 4; ++d) {
                    const int nx = x + dx[d];
                    const int ny = y + dy[d];
                    if (nx < 0 || nx >= image.m || ny < 0 || ny >= image.n) continue;
                    const std::size_t i = std::size_t(nx) * image.n + ny;
                    if (image.v[i] < cut || component[i] >= 0) continue;
                    component[i] = next_id;
                    queue.push_back({nx, ny});
                }
            }
            if (blob.size() > best.size()) best = std::move(blob);
            ++next_id;
        }
    }
    return TargetMask::from_coords(image.m, image.n, std::move(best));
}

// ---------------------------------------------------------------------------
// PGM / PBM / manifest IO

namespace {

// Reads one whitespace-delimited PNM header token, skipping '#' comments.
std::string pnm_token(std::istream& is) {
    std::string tok;
    int c;
    while ((c = is.get()) != EOF) {
        if (c == '#') {
            while ((c = is.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) continue;
        break;
    }
    if (c == EOF) return tok;
    tok.push_back(char(c));
    while ((c = is.get()) != EOF && !std::isspace(c) && c != '#') tok.push_back(char(c));
    if (c == '#') is.putback('#');
    return tok;
}

int parse_dim(const std::string& tok, const char* field) {
    if (tok.empty()) throw format_error(field, std::string("pnm: missing ") + field);
    int value = 0;
    for (char ch : tok) {
        if (!std::isdigit(static_cast<unsigned char>(ch)))
            throw format_error(field, std::string("pnm: non-numeric ") + field + ": " + tok);
        value = value * 10 + (ch - '0');
        if (value > 1 << 20)
            throw format_error(field, std::string("pnm: implausibly large ") + field);
    }
    if (value <= 0) throw format_error(field, std::string("pnm: ") + field + " must be > 0");
    return value;
}

}  // namespace

void save_image(const SarImage& image, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("image: cannot open for writing: " + path);
    double scale = 0.0;
    for (double p : image.v) scale = std::max(scale, p);
    if (scale <= 0.0) scale = 1.0;
    os << "P5\n" << image.n << " " << image.m << "\n65535\n";
    for (double p : image.v) {
        const double clamped = std::clamp(p, 0.0, scale);
        const auto sample = std::uint16_t(std::lround(clamped / scale * 65535.0));
        const unsigned char bytes[2] = {static_cast<unsigned char>(sample >> 8),
                                        static_cast<unsigned char>(sample & 0xffu)};
        os.write(reinterpret_cast<const char*>(bytes), 2);
    }
    if (!os) throw io_error("image: write failed: " + path);

    json sidecar;
    sidecar["scale"] = scale;
    sidecar["width"] = image.n;
    sidecar["height"] = image.m;
    std::ofstream js(path + ".json");
    if (!js) throw io_error("image: cannot open sidecar for writing: " + path + ".json");
    js << sidecar.dump() << "\n";
}

SarImage load_image(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("image: cannot open: " + path);
    const std::string magic = pnm_token(is);
    if (magic != "P5") throw format_error("magic", "pgm: expected magic P5, got '" + magic + "'");
    const int width = parse_dim(pnm_token(is), "width");
    const int height = parse_dim(pnm_token(is), "height");
    if (std::size_t(width) * std::size_t(height) > (std::size_t(1) << 24))
        throw format_error("dimensions", "pgm: image dimensions implausibly large");
    const int maxval = parse_dim(pnm_token(is), "maxval");
    if (maxval != 65535) throw format_error("maxval", "pgm: expected maxval 65535");

    SarImage image(height, width);
    std::vector<unsigned char> raw(std::size_t(width) * height * 2);
    is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (std::size_t(is.gcount()) != raw.size())
        throw format_error("pixel data", "pgm: truncated pixel data");

    std::ifstream js(path + ".json");
    if (!js) throw io_error("image: cannot open sidecar: " + path + ".json");
    json sidecar;
    try {
        js >> sidecar;
    } catch (const json::exception& e) {
        throw format_error("sidecar", std::string("sidecar: invalid JSON: ") + e.what());
    }
    if (!sidecar.contains("scale") || !sidecar["scale"].is_number())
        throw format_error("scale", "sidecar: missing numeric 'scale'");
    if (!sidecar.contains("width") || sidecar["width"] != width)
        throw format_error("width", "sidecar: width disagrees with the PGM header");
    if (!sidecar.contains("height") || sidecar["height"] != height)
        throw format_error("height", "sidecar: height disagrees with the PGM header");
    const double scale = sidecar["scale"].get<double>();
    if (!std::isfinite(scale) || scale < 0.0)
        throw format_error("scale", "sidecar: scale must be finite and >= 0");

    for (std::size_t i = 0; i < image.v.size(); ++i) {
        const unsigned sample = unsigned(raw[2 * i]) << 8 | raw[2 * i + 1];
        image.v[i] = sample / 65535.0 * scale;
    }
    return image;
}

void save_mask(const TargetMask& mask, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("mask: cannot open for writing: " + path);
    os << "P4\n" << mask.width << " " << mask.height << "\n";
    const int row_bytes = (mask.width + 7) / 8;
    std::vector<unsigned char> bits(std::size_t(row_bytes) * mask.height, 0);
    for (auto [x, y] : mask.coords)
        bits[std::size_t(x) * row_bytes + y / 8] |= static_cast<unsigned char>(0x80u >> (y % 8));
    os.write(reinterpret_cast<const char*>(bits.data()), std::streamsize(bits.size()));
    if (!os) throw io_error("mask: write failed: " + path);
}

TargetMask load_mask(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("mask: cannot open: " + path);
    const std::string magic = pnm_token(is);
    if (magic != "P4") throw format_error("magic", "pbm: expected magic P4, got '" + magic + "'");
    const int width = parse_dim(pnm_token(is), "width");
    const int height = parse_dim(pnm_token(is), "height");
    if (std::size_t(width) * std::size_t(height) > (std::size_t(1) << 24))
        throw format_error("dimensions", "pbm: mask dimensions implausibly large");

    const int row_bytes = (width + 7) / 8;
    std::vector<unsigned char> bits(std::size_t(row_bytes) * height);
    is.read(reinterpret_cast<char*>(bits.data()), std::streamsize(bits.size()));
    if (std::size_t(is.gcount()) != bits.size())
        throw format_error("pixel data", "pbm: truncated bitmap data");

    std::vector<std::pair<int, int>> coords;
    for (int x = 0; x < height; ++x)
        for (int y = 0; y < width; ++y)
            if (bits[std::size_t(x) * row_bytes + y / 8] & (0x80u >> (y % 8)))
                coords.push_back({x, y});
    return TargetMask::from_coords(height, width, std::move(coords));
}

void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
    json arr = json::array();
    for (const ManifestEntry& e : entries) {
        arr.push_back({{"id", e.id},
                       {"image_path", e.image_path},
                       {"mask_path", e.mask_path},
                       {"label", e.label}});
    }
    std::ofstream os(path);
    if (!os) throw io_error("manifest: cannot open for writing: " + path);
    os << arr.dump(2) << "\n";
    if (!os) throw io_error("manifest: write failed: " + path);
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw parameter_error("manifest: not found: " + path);
    json arr;
    try {
        is >> arr;
    } catch (const json::exception& e) {
        throw format_error("manifest", std::string("manifest: invalid JSON: ") + e.what());
    }
    if (!arr.is_array()) throw format_error("manifest", "manifest: expected a JSON array");
    std::vector<ManifestEntry> entries;
    for (const json& item : arr) {
        for (const char* key : {"id", "image_path", "mask_path", "label"})
            if (!item.contains(key))
                throw format_error(key, std::string("manifest: entry missing '") + key + "'");
        if (!item["label"].is_number_integer())
            throw format_error("label", "manifest: label must be an integer");
        entries.push_back({item["id"].get<std::string>(), item["image_path"].get<std::string>(),
                           item["mask_path"].get<std::string>(), item["label"].get<int>()});
    }
    return entries;
}

LabeledSample load_sample(const ManifestEntry& entry, const std::string& base_dir) {
    const auto resolve = [&base_dir](const std::string& p) {
        fs::path path(p);
        return path.is_absolute() ? path.string() : (fs::path(base_dir) / path).string();
    };
    LabeledSample sample;
    sample.id = entry.id;
    sample.label = entry.label;
    sample.image = load_image(resolve(entry.image_path));
    sample.mask = load_mask(resolve(entry.mask_path));
    if (sample.mask.height != sample.image.m || sample.mask.width != sample.image.n)
        throw format_error("dimensions",
                           "sample " + entry.id + ": mask and image dimensions disagree");
    return sample;
}

// ---------------------------------------------------------------------------
// MSTAR Phoenix header

MstarHeader parse_mstar_header(const std::vector<std::uint8_t>& bytes) {
    static const std::string kSentinel = "[PhoenixHeaderVer";
    if (bytes.size() < kSentinel.size() ||
        std::memcmp(bytes.data(), kSentinel.data(), kSentinel.size()) != 0)
        throw format_error("sentinel",
                           "mstar: unsupported format (missing [PhoenixHeaderVer sentinel)");

    // Header is ASCII key= value lines; stop at the end marker or a sane cap.
    const std::size_t limit = std::min<std::size_t>(bytes.size(), 1 << 16);
    std::string text(reinterpret_cast<const char*>(bytes.data()), limit);
    MstarHeader header;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.rfind("[EndofPhoenixHeader]", 0) == 0) break;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) header.fields[key] = value;
    }

    const auto it = header.fields.find("PhoenixHeaderLength");
    if (it == header.fields.end())
        throw format_error("PhoenixHeaderLength",
                           "mstar: unsupported format (missing PhoenixHeaderLength)");
    try {
        const long long declared = std::stoll(it->second);
        if (declared < 0) throw std::out_of_range("negative");
        header.data_offset = std::size_t(declared);
    } catch (const std::exception&) {
        throw format_error("PhoenixHeaderLength",
                           "mstar: PhoenixHeaderLength is not a valid length: " + it->second);
    }

    for (auto [key, out] : {std::pair{"NumberOfColumns", &header.columns},
                            std::pair{"NumberOfRows", &header.rows}}) {
        const auto f = header.fields.find(key);
        if (f == header.fields.end()) continue;
        try {
            *out = std::stoi(f->second);
        } catch (const std::exception&) {
            throw format_error(key, std::string("mstar: ") + key + " is not an integer");
        }
    }
    return header;
}

}  // namespace otsa
