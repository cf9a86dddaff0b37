// SPDX-License-Identifier: Apache-2.0

#include "pdeblur/data_synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "pdeblur/image_io.hpp"
#include "pdeblur/metrics.hpp"
#include "pdeblur/rng.hpp"
#include "pdeblur/serialization.hpp"

namespace pdeblur::synth {

namespace fs = std::filesystem;

MotionKernel make_motion_kernel(Real length, Real angle) {
    if (!(length >= 1)) throw ContractError("motion kernel length must be >= 1, got " + std::to_string(length));
    MotionKernel k;
    k.length = length;
    k.angle = angle;
    const Real half = (length - 1) / 2;
    const auto r = static_cast<std::ptrdiff_t>(std::ceil(half));
    k.size = static_cast<std::size_t>(2 * r + 1);
    k.taps.assign(k.size * k.size, Real(0));
    const auto n = static_cast<std::size_t>(std::ceil(length - 1e-9));
    const Real c = std::cos(angle);
    const Real s = std::sin(angle);
    const auto splat = [&](std::ptrdiff_t iy, std::ptrdiff_t ix, Real w) {
        if (w == 0) return;
        if (iy < -r || iy > r || ix < -r || ix > r) return;
        k.taps[static_cast<std::size_t>((iy + r) * (2 * r + 1) + ix + r)] += w;
    };
    for (std::size_t i = 0; i < n; ++i) {
        const Real t = n == 1 ? Real(0) : -half + (length - 1) * static_cast<Real>(i) / static_cast<Real>(n - 1);
        // Snap tiny trigonometric residue so axis-aligned kernels stay on-grid.
        Real px = t * c;
        Real py = t * s;
        if (std::abs(px - std::round(px)) < 1e-12) px = std::round(px);
        if (std::abs(py - std::round(py)) < 1e-12) py = std::round(py);
        const Real fx = std::floor(px);
        const Real fy = std::floor(py);
        const Real ax = px - fx;
        const Real ay = py - fy;
        const auto ix = static_cast<std::ptrdiff_t>(fx);
        const auto iy = static_cast<std::ptrdiff_t>(fy);
        splat(iy, ix, (1 - ax) * (1 - ay));
        splat(iy, ix + 1, ax * (1 - ay));
        splat(iy + 1, ix, (1 - ax) * ay);
        splat(iy + 1, ix + 1, ax * ay);
    }
    Real total = 0;
    for (Real w : k.taps) total += w;
    for (Real& w : k.taps) w /= total;
    return k;
}

FeatureMap blur(const FeatureMap& image, const MotionKernel& kernel, BoundaryMode mode, Real noise_sigma,
                std::uint64_t seed) {
    const Shape& s = image.shape();
    FeatureMap out(s);
    const auto H = static_cast<std::ptrdiff_t>(s.height);
    const auto W = static_cast<std::ptrdiff_t>(s.width);
    const std::ptrdiff_t r = kernel.radius();
    std::mt19937_64 rng(seed);
    std::normal_distribution<Real> noise(0, noise_sigma > 0 ? noise_sigma : 1);
    for (std::size_t b = 0; b < s.batch; ++b) {
        for (std::size_t c = 0; c < s.channels; ++c) {
            const ConstPlane in = image.plane(b, c);
            auto dst = out.plane(b, c);
            for (std::ptrdiff_t y = 0; y < H; ++y) {
                for (std::ptrdiff_t x = 0; x < W; ++x) {
                    Real acc = 0;
                    for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                        const std::ptrdiff_t yy = resolve_index(y + dy, H, mode);
                        for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                            const Real w = kernel.tap(dy, dx);
                            if (w == 0) continue;
                            const std::ptrdiff_t xx = resolve_index(x + dx, W, mode);
                            if (yy < 0 || xx < 0) continue;
                            acc += w * in.at(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
                        }
                    }
                    dst[static_cast<std::size_t>(y * W + x)] = acc;
                }
            }
        }
    }
    if (noise_sigma > 0) {
        for (Real& v : out.data()) v += noise(rng);
    }
    for (Real& v : out.data()) v = std::clamp(v, Real(0), Real(1));
    return out;
}

void DatasetConfig::validate() const {
    if (size == 0) throw ContractError("dataset: size must be > 0");
    if (channels != 1 && channels != 3) throw ContractError("dataset: channels must be 1 or 3");
    if (!(blur_len_min >= 1) || blur_len_max < blur_len_min) {
        throw ContractError("dataset: need 1 <= blur_len_min <= blur_len_max");
    }
    if (noise_sigma_min < 0 || noise_sigma_max < noise_sigma_min) {
        throw ContractError("dataset: need 0 <= noise_sigma_min <= noise_sigma_max");
    }
    if (val_fraction < 0 || test_fraction < 0 || val_fraction + test_fraction > 1) {
        throw ContractError("dataset: split fractions must be nonnegative and sum to <= 1");
    }
}

nlohmann::json DatasetConfig::to_json() const {
    nlohmann::json j{{"count", count},
                     {"size", size},
                     {"channels", channels},
                     {"blur_len_min", blur_len_min},
                     {"blur_len_max", blur_len_max},
                     {"noise_sigma_min", noise_sigma_min},
                     {"noise_sigma_max", noise_sigma_max},
                     {"val_fraction", val_fraction},
                     {"test_fraction", test_fraction},
                     {"boundary", to_string(boundary)},
                     {"seed", seed}};
    j["source_dir"] = source_dir ? nlohmann::json(source_dir->string()) : nlohmann::json(nullptr);
    return j;
}

DatasetConfig DatasetConfig::from_json(const nlohmann::json& j) {
    DatasetConfig c;
    c.count = j.at("count").get<std::size_t>();
    c.size = j.at("size").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.blur_len_min = j.at("blur_len_min").get<Real>();
    c.blur_len_max = j.at("blur_len_max").get<Real>();
    c.noise_sigma_min = j.at("noise_sigma_min").get<Real>();
    c.noise_sigma_max = j.at("noise_sigma_max").get<Real>();
    c.val_fraction = j.at("val_fraction").get<Real>();
    c.test_fraction = j.at("test_fraction").get<Real>();
    c.boundary = boundary_from_string(j.at("boundary").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("source_dir") && !j["source_dir"].is_null()) c.source_dir = j["source_dir"].get<std::string>();
    return c;
}

namespace {

using Vec2 = std::array<Real, 2>;
using Rgb = std::array<Real, 3>;

struct Polygon {
    std::vector<Vec2> pts;  // counter-clockwise
    Rgb color;

    bool contains(Real x, Real y) const {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const Vec2& a = pts[i];
            const Vec2& b = pts[(i + 1) % pts.size()];
            if ((b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]) < 0) return false;
        }
        return true;
    }
};

struct Stroke {
    std::vector<Vec2> pts;
    Real half_width;
    Rgb color;

    bool contains(Real x, Real y) const {
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
            const Vec2& a = pts[i];
            const Vec2& b = pts[i + 1];
            const Real vx = b[0] - a[0];
            const Real vy = b[1] - a[1];
            const Real len2 = vx * vx + vy * vy;
            Real t = len2 > 0 ? ((x - a[0]) * vx + (y - a[1]) * vy) / len2 : 0;
            t = std::clamp(t, Real(0), Real(1));
            const Real dx = x - (a[0] + t * vx);
            const Real dy = y - (a[1] + t * vy);
            if (dx * dx + dy * dy <= half_width * half_width) return true;
        }
        return false;
    }
};

struct Scene {
    Rgb bg0, bg1;
    Vec2 origin, dir;  // dir scaled so the ramp spans 0..1 across the gradient
    std::vector<Polygon> polys;
    std::vector<Stroke> strokes;

    Rgb shade(Real x, Real y) const {
        for (auto it = strokes.rbegin(); it != strokes.rend(); ++it) {
            if (it->contains(x, y)) return it->color;
        }
        for (auto it = polys.rbegin(); it != polys.rend(); ++it) {
            if (it->contains(x, y)) return it->color;
        }
        const Real t = std::clamp((x - origin[0]) * dir[0] + (y - origin[1]) * dir[1], Real(0), Real(1));
        return {bg0[0] + t * (bg1[0] - bg0[0]), bg0[1] + t * (bg1[1] - bg0[1]), bg0[2] + t * (bg1[2] - bg0[2])};
    }
};

Scene make_scene(Real size, std::mt19937_64& rng) {
    std::uniform_real_distribution<Real> unit(0, 1);
    const auto color = [&] { return Rgb{unit(rng), unit(rng), unit(rng)}; };
    const auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    constexpr Real two_pi = 2 * std::numbers::pi_v<Real>;
    Scene sc;
    sc.bg0 = color();
    sc.bg1 = color();
    const Real theta = two_pi * unit(rng);
    const Real span = size * (Real(0.5) + unit(rng));
    sc.origin = {size * unit(rng), size * unit(rng)};
    sc.dir = {std::cos(theta) / span, std::sin(theta) / span};

    const int n_poly = pick(3, 6);
    for (int p = 0; p < n_poly; ++p) {
        Polygon poly;
        poly.color = color();
        const Vec2 c{size * unit(rng), size * unit(rng)};
        const Real radius = size * (Real(0.08) + Real(0.25) * unit(rng));
        std::vector<Real> angles(static_cast<std::size_t>(pick(3, 7)));
        for (Real& a : angles) a = two_pi * unit(rng);
        std::sort(angles.begin(), angles.end());
        for (Real a : angles) {
            const Real rr = radius * (Real(0.6) + Real(0.4) * unit(rng));
            poly.pts.push_back({c[0] + rr * std::cos(a), c[1] + rr * std::sin(a)});
        }
        sc.polys.push_back(std::move(poly));
    }

    const int n_strokes = pick(2, 5);
    for (int k = 0; k < n_strokes; ++k) {
        Stroke st;
        st.color = color();
        st.half_width = Real(0.4) + Real(0.6) * unit(rng);
        Vec2 p{size * unit(rng), size * unit(rng)};
        st.pts.push_back(p);
        Real heading = two_pi * unit(rng);
        const int segs = pick(1, 4);
        for (int s = 0; s < segs; ++s) {
            const Real len = size * (Real(0.1) + Real(0.15) * unit(rng));
            p = {p[0] + len * std::cos(heading), p[1] + len * std::sin(heading)};
            st.pts.push_back(p);
            heading += (unit(rng) - Real(0.5)) * std::numbers::pi_v<Real>;
        }
        sc.strokes.push_back(std::move(st));
    }
    return sc;
}

constexpr int kSupersample = 4;

FeatureMap center_crop(const FeatureMap& src, std::size_t size, std::size_t channels, const fs::path& origin) {
    const Shape& s = src.shape();
    if (s.height < size || s.width < size) {
        throw ContractError("source image " + origin.string() + " is " + std::to_string(s.width) + "x" +
                            std::to_string(s.height) + ", smaller than the requested size " + std::to_string(size));
    }
    const std::size_t oy = (s.height - size) / 2;
    const std::size_t ox = (s.width - size) / 2;
    FeatureMap out(Shape{1, channels, size, size});
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                Real v = 0;
                if (s.channels == channels) {
                    v = src.at(0, c, oy + y, ox + x);
                } else if (s.channels == 1) {
                    v = src.at(0, 0, oy + y, ox + x);
                } else {
                    v = (src.at(0, 0, oy + y, ox + x) + src.at(0, 1, oy + y, ox + x) + src.at(0, 2, oy + y, ox + x)) / 3;
                }
                out.at(0, c, y, x) = io::quantize_8bit(v);
            }
        }
    }
    return out;
}

std::vector<fs::path> list_source_images(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ContractError("no .ppm/.pgm files found in " + dir.string());
    return files;
}

std::string sample_name(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06zu.ppm", index);
    return buf;
}

constexpr const char* kManifestFormat = "pdeblur.dataset";
constexpr int kManifestVersion = 1;

} // namespace

FeatureMap render_sharp_image(std::size_t size, std::size_t channels, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Scene sc = make_scene(static_cast<Real>(size), rng);
    FeatureMap img(Shape{1, channels, size, size});
    constexpr Real inv = Real(1) / (kSupersample * kSupersample);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            Rgb acc{0, 0, 0};
            for (int sy = 0; sy < kSupersample; ++sy) {
                for (int sx = 0; sx < kSupersample; ++sx) {
                    const Real px = static_cast<Real>(x) + (sx + Real(0.5)) / kSupersample;
                    const Real py = static_cast<Real>(y) + (sy + Real(0.5)) / kSupersample;
                    const Rgb c = sc.shade(px, py);
                    for (int k = 0; k < 3; ++k) acc[static_cast<std::size_t>(k)] += c[static_cast<std::size_t>(k)];
                }
            }
            if (channels == 1) {
                img.at(0, 0, y, x) = io::quantize_8bit((acc[0] + acc[1] + acc[2]) * inv / 3);
            } else {
                for (std::size_t c = 0; c < channels; ++c) img.at(0, c, y, x) = io::quantize_8bit(acc[c] * inv);
            }
        }
    }
    return img;
}

Dataset generate_dataset(const DatasetConfig& config) {
    config.validate();
    Dataset ds;
    ds.config = config;
    std::vector<fs::path> sources;
    if (config.source_dir) sources = list_source_images(*config.source_dir);

    const auto n = config.count;
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * config.test_fraction));
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * config.val_fraction));
    if (n_test + n_val > n) throw ContractError("dataset: split sizes exceed count");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 split_rng(derive_seed(config.seed, 0x5b117ULL));
    std::shuffle(order.begin(), order.end(), split_rng);
    std::vector<int> split_of(n, 0);
    for (std::size_t i = 0; i < n_val; ++i) split_of[order[i]] = 1;
    for (std::size_t i = n_val; i < n_val + n_test; ++i) split_of[order[i]] = 2;

    const auto lo = static_cast<int>(std::ceil(config.blur_len_min));
    const auto hi = std::max(lo, static_cast<int>(std::floor(config.blur_len_max)));
    for (std::size_t i = 0; i < n; ++i) {
        PairSample s;
        s.index = i;
        if (sources.empty()) {
            s.sharp = render_sharp_image(config.size, config.channels, derive_seed(config.seed, 2 * i));
        } else {
            const fs::path& p = sources[i % sources.size()];
            s.sharp = center_crop(io::read_image(p), config.size, config.channels, p);
        }
        std::mt19937_64 rng(derive_seed(config.seed, 2 * i + 1));
        s.kernel_length = static_cast<Real>(std::uniform_int_distribution<int>(lo, hi)(rng));
        s.kernel_angle = std::uniform_real_distribution<Real>(0, std::numbers::pi_v<Real>)(rng);
        s.noise_sigma = std::uniform_real_distribution<Real>(config.noise_sigma_min, config.noise_sigma_max)(rng);
        const MotionKernel k = make_motion_kernel(s.kernel_length, s.kernel_angle);
        s.blurred = blur(s.sharp, k, config.boundary, s.noise_sigma, rng());
        for (Real& v : s.blurred.data()) v = io::quantize_8bit(v);
        (split_of[i] == 0 ? ds.train : split_of[i] == 1 ? ds.val : ds.test).push_back(std::move(s));
    }
    return ds;
}

void save_dataset(const Dataset& dataset, const fs::path& dir) {
    fs::create_directories(dir / "sharp");
    fs::create_directories(dir / "blurred");
    nlohmann::json splits = nlohmann::json::object();
    const auto dump = [&](const char* name, const std::vector<PairSample>& samples) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& s : samples) {
            const std::string file = sample_name(s.index);
            io::write_image(dir / "sharp" / file, s.sharp);
            io::write_image(dir / "blurred" / file, s.blurred);
            arr.push_back({{"index", s.index},
                           {"sharp", "sharp/" + file},
                           {"blurred", "blurred/" + file},
                           {"kernel", {{"length", s.kernel_length}, {"angle", s.kernel_angle}}},
                           {"noise_sigma", s.noise_sigma}});
        }
        splits[name] = std::move(arr);
    };
    dump("train", dataset.train);
    dump("val", dataset.val);
    dump("test", dataset.test);
    const nlohmann::json manifest{{"format", kManifestFormat},
                                  {"version", kManifestVersion},
                                  {"config", dataset.config.to_json()},
                                  {"splits", splits}};
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(manifest_path.string() + ": " + e.what());
    }
    require_format(m, kManifestFormat, kManifestVersion);
    Dataset ds;
    ds.config = DatasetConfig::from_json(m.at("config"));
    const auto load = [&](const char* name, std::vector<PairSample>& out) {
        for (const auto& e : m.at("splits").at(name)) {
            PairSample s;
            s.index = e.at("index").get<std::size_t>();
            s.sharp = io::read_image(dir / e.at("sharp").get<std::string>());
            s.blurred = io::read_image(dir / e.at("blurred").get<std::string>());
            s.kernel_length = e.at("kernel").at("length").get<Real>();
            s.kernel_angle = e.at("kernel").at("angle").get<Real>();
            s.noise_sigma = e.at("noise_sigma").get<Real>();
            require_same_shape(s.sharp, s.blurred, "dataset pair");
            out.push_back(std::move(s));
        }
    };
    load("train", ds.train);
    load("val", ds.val);
    load("test", ds.test);
    return ds;
}

Real mean_blurred_psnr(std::span<const PairSample> samples) {
    if (samples.empty()) return 0;
    Real total = 0;
    for (const auto& s : samples) total += metrics::psnr(s.blurred, s.sharp);
    return total / static_cast<Real>(samples.size());
}

FeatureMap stack_batch(std::span<const PairSample> samples, std::span<const std::size_t> indices, bool blurred) {
    if (indices.empty()) throw ContractError("stack_batch: empty index list");
    const Shape one = samples[indices[0]].sharp.shape();
    FeatureMap out(Shape{indices.size(), one.channels, one.height, one.width});
    const std::size_t per = one.channels * one.height * one.width;
    for (std::size_t b = 0; b < indices.size(); ++b) {
        const auto& s = samples[indices[b]];
        const FeatureMap& src = blurred ? s.blurred : s.sharp;
        if (src.shape() != one) throw ShapeError("stack_batch: mixed sample shapes");
        std::copy(src.data().begin(), src.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * per));
    }
    return out;
}

} // namespace pdeblur::synth
