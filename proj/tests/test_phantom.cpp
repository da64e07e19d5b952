#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "thz/error.hpp"
#include "thz/phantom.hpp"

using namespace thz;
using test::kind_of;

namespace {

std::size_t first_pixel(const LabeledCube& lc, RegionKind region) {
    for (std::size_t p = 0; p < lc.regions.size(); ++p)
        if (lc.regions[p] == region) return p;
    return lc.regions.size();
}

OpticalConstants extract_pixel(const LabeledCube& lc, std::size_t p) {
    return extract_constants(forward_transform(lc.cube.trace(p)), forward_transform(lc.reference),
                             SampleGeometry{lc.thickness_mm[p]});
}

PhantomSpec noiseless(const std::string& name) {
    auto s = preset(name);
    s.noise_std = 0.0;
    return s;
}

}  // namespace

TEST(Reference, CoversBandAndIsDeterministic) {
    const PhantomSpec spec;
    const auto a = make_reference(spec);
    EXPECT_EQ(a, make_reference(spec));
    const auto s = forward_transform(a);
    double peak = 0;
    for (const auto& b : s.bins) peak = std::max(peak, std::abs(b));
    for (double f : {0.2, 1.0, 2.0}) EXPECT_GE(std::abs(s.bins[s.nearest_bin(f)]), 1e-3 * peak) << f;
    EXPECT_GT(s.nyquist(), 6.0);

    PhantomSpec zero;
    zero.pulse.amplitude = 0.0;
    const auto flat = make_reference(zero);
    for (double v : flat.samples()) EXPECT_EQ(v, 0.0);

    PhantomSpec small;
    small.nt = 128;
    EXPECT_EQ(kind_of([&] { (void)make_reference(small); }), ErrorKind::dimension);
}

TEST(Synthesize, VacuumPixelsEqualReference) {
    PhantomSpec spec;
    spec.nx = spec.ny = 3;
    spec.geometry = Geometry::uniform;
    spec.regions = {{RegionKind::blade, MaterialModel::vacuum(), 0.3}};
    const auto lc = synthesize(spec);
    for (std::size_t p = 0; p < 9; ++p)
        for (std::size_t k = 0; k < spec.nt; ++k) EXPECT_NEAR(lc.cube.pixel(p)[k], lc.reference[k], 1e-12);
}

TEST(Synthesize, LabelsPartitionTheGrid) {
    for (const auto& name : preset_names()) {
        const auto spec = preset(name);
        const auto lc = synthesize(spec);
        ASSERT_EQ(lc.labels.size(), lc.cube.pixel_count());
        ASSERT_EQ(lc.regions, region_layout(spec));
        std::size_t bg = 0, cls = 0;
        for (std::size_t p = 0; p < lc.labels.size(); ++p) {
            EXPECT_EQ(lc.labels[p] == kLabelBackground, lc.regions[p] == RegionKind::background);
            if (lc.labels[p] == kLabelBackground) ++bg;
            if (lc.labels[p] == spec.class_id) ++cls;
            EXPECT_EQ(lc.thickness_mm[p], spec.find(lc.regions[p])->thickness_mm);
        }
        EXPECT_EQ(bg + cls, lc.labels.size());
        EXPECT_GT(cls, 0u);
    }
}

TEST(Synthesize, Deterministic) {
    const auto spec = preset("leaf-infected");
    EXPECT_EQ(synthesize(spec).cube, synthesize(spec).cube);
    auto other = spec;
    other.seed = spec.seed + 1;
    EXPECT_NE(synthesize(other).cube, synthesize(spec).cube);
}

TEST(Synthesize, NoiseIsIndependentAcrossPixels) {
    PhantomSpec spec;
    spec.nx = 4;
    spec.ny = 1;
    spec.nt = 10240;
    spec.geometry = Geometry::uniform;
    spec.regions = {{RegionKind::blade, MaterialModel::vacuum(), 0.3}};
    spec.noise_std = 1.0;
    spec.seed = 12345;
    const auto lc = synthesize(spec);
    auto noise = [&](std::size_t p) {
        std::vector<double> n(spec.nt);
        for (std::size_t k = 0; k < spec.nt; ++k) n[k] = lc.cube.pixel(p)[k] - lc.reference[k];
        return n;
    };
    auto corr = [](const std::vector<double>& a, const std::vector<double>& b) {
        double ma = 0, mb = 0;
        for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
        ma /= static_cast<double>(a.size());
        mb /= static_cast<double>(b.size());
        double sab = 0, saa = 0, sbb = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            sab += (a[i] - ma) * (b[i] - mb);
            saa += (a[i] - ma) * (a[i] - ma);
            sbb += (b[i] - mb) * (b[i] - mb);
        }
        return sab / std::sqrt(saa * sbb);
    };
    const auto n0 = noise(0), n1 = noise(1), n3 = noise(3);
    EXPECT_LT(std::abs(corr(n0, n1)), 0.05);
    EXPECT_LT(std::abs(corr(n0, n3)), 0.05);
    double var = 0;
    for (double v : n0) var += v * v;
    EXPECT_NEAR(var / static_cast<double>(spec.nt), 1.0, 0.05);
}

// With nt equal to the transform length the whole circular response of the material survives, so
// extraction is exact up to rounding.
TEST(Synthesize, GroundTruthRecoverable) {
    for (const auto& name : preset_names()) {
        auto spec = noiseless(name);
        spec.nt = 4096;
        const auto lc = synthesize(spec);
        for (const auto& r : spec.regions) {
            const std::size_t p = first_pixel(lc, r.region);
            ASSERT_LT(p, lc.regions.size()) << name;
            const auto oc = extract_pixel(lc, p);
            ASSERT_GT(oc.valid_count(), 0u);
            const auto truth = sample_material(r.material, oc.frequencies);
            for (std::size_t k = 0; k < oc.size(); ++k)
                if (oc.valid[k]) {
                    ASSERT_NEAR(oc.n[k], truth.n[k], 1e-6) << name << " " << to_string(r.region);
                    ASSERT_NEAR(oc.alpha[k], truth.alpha[k], 1e-4) << name << " " << to_string(r.region);
                }
        }
    }
}

// At the default length the slowly decaying response of a kinked material is truncated; the error
// concentrates at the control-point kinks and stays small.
TEST(Synthesize, GroundTruthCloseAtDefaultLength) {
    for (const auto& name : preset_names()) {
        const auto spec = noiseless(name);
        const auto lc = synthesize(spec);
        for (const auto& r : spec.regions) {
            const auto oc = extract_pixel(lc, first_pixel(lc, r.region));
            const auto truth = sample_material(r.material, oc.frequencies);
            for (std::size_t k = 0; k < oc.size(); ++k)
                if (oc.valid[k]) {
                    ASSERT_NEAR(oc.n[k], truth.n[k], 1e-3) << name << " " << oc.frequencies[k];
                    ASSERT_NEAR(oc.alpha[k], truth.alpha[k], 0.02 * std::max(1.0, truth.alpha[k]))
                        << name << " " << oc.frequencies[k];
                }
        }
    }
}

TEST(Presets, LeafCurvesCrossNear16THz) {
    const auto h = synthesize(noiseless("leaf-healthy"));
    const auto i = synthesize(noiseless("leaf-infected"));
    const auto oh = extract_pixel(h, first_pixel(h, RegionKind::blade));
    const auto oi = extract_pixel(i, first_pixel(i, RegionKind::blade));
    double crossing = -1;
    for (std::size_t k = 1; k < oh.size(); ++k) {
        if (!(oh.valid[k] && oh.valid[k - 1] && oi.valid[k] && oi.valid[k - 1])) continue;
        const double a = oh.n[k - 1] - oi.n[k - 1], b = oh.n[k] - oi.n[k];
        if (a > 0 && b <= 0) crossing = oh.frequencies[k];
    }
    EXPECT_NEAR(crossing, 1.6, 0.1);
    for (std::size_t k = 0; k < oh.size(); ++k) {
        if (!(oh.valid[k] && oi.valid[k])) continue;
        if (oh.frequencies[k] < 1.5) EXPECT_LT(oi.n[k], oh.n[k]);
        if (oh.frequencies[k] > 1.7) EXPECT_GT(oi.n[k], oh.n[k]);
    }
}

TEST(Presets, RootOrderingAndAbsorptionBand) {
    const auto h = preset("root-healthy");
    const auto i = preset("root-infected");
    std::vector<double> f;
    for (double x = 0.1; x <= 4.0; x += 0.05) f.push_back(x);
    for (auto region : {RegionKind::blade}) {
        const auto nh = sample_material(h.find(region)->material, f);
        const auto ni = sample_material(i.find(region)->material, f);
        for (std::size_t k = 0; k < f.size(); ++k) EXPECT_LT(ni.n[k], nh.n[k]);
    }
    const auto* gall = i.find(RegionKind::gall);
    ASSERT_NE(gall, nullptr);
    const auto& pts = gall->material.points;
    const auto at = [&](double fq) {
        for (const auto& p : pts)
            if (std::abs(p.f_thz - fq) < 1e-12) return p.alpha_cm;
        ADD_FAILURE() << "no control point at " << fq;
        return 0.0;
    };
    EXPECT_GE(at(0.4), 1.2 * 0.5 * (at(0.3) + at(0.5)));
    const auto in_range = [](const PhantomSpec& spec, double lo, double hi) {
        for (const auto& r : spec.regions) {
            if (r.region == RegionKind::background) continue;
            for (const auto& p : r.material.points)
                if (p.f_thz >= 0.2 && p.f_thz <= 2.0) {
                    EXPECT_GE(p.n, lo) << spec.name;
                    EXPECT_LE(p.n, hi) << spec.name;
                }
        }
    };
    in_range(h, 2.1, 2.4);
    in_range(i, 1.2, 1.6);
    for (const auto& name : {"leaf-healthy", "leaf-infected"})
        for (const auto& r : preset(name).regions) {
            if (r.region == RegionKind::background) continue;
            for (const auto& p : r.material.points)
                if (p.f_thz >= 0.2 && p.f_thz <= 2.0) {
                    EXPECT_GE(p.n, 2.1);
                    EXPECT_LE(p.n, 2.4);
                }
        }
}

TEST(Presets, InfectedVeinsWetterThanBlade) {
    const auto spec = preset("leaf-infected");
    const auto vein = sample_material(spec.find(RegionKind::vein)->material, std::vector<double>{0.5, 1.0});
    const auto blade = sample_material(spec.find(RegionKind::blade)->material, std::vector<double>{0.5, 1.0});
    EXPECT_GT(vein.n[0], blade.n[0]);
    EXPECT_GT(vein.n[1], blade.n[1]);
}

TEST(Presets, ShippedFilesMatchBuiltIns) {
    const std::filesystem::path dir = std::filesystem::path(THZ_SOURCE_DIR) / "presets";
    for (const auto& name : preset_names()) {
        const auto from_file = read_phantom_spec(dir / (name + ".json"));
        EXPECT_EQ(from_file, preset(name)) << name;
    }
    EXPECT_EQ(kind_of([] { (void)preset("nope"); }), ErrorKind::input);
}

TEST(PhantomSpecJson, RoundTripAndValidation) {
    test::TempDir dir("phantom");
    auto spec = preset("root-infected");
    spec.seed = 0xFFFFFFFFFFFFull;
    write_phantom_spec(dir / "s.json", spec);
    EXPECT_EQ(read_phantom_spec(dir / "s.json"), spec);

    nlohmann::json j = spec;
    j["regions"][1]["material"]["points"][0][1] = 0.5;  // n < 1
    {
        std::ofstream os(dir / "bad.json");
        os << j.dump();
    }
    EXPECT_EQ(kind_of([&] { (void)synthesize(read_phantom_spec(dir / "bad.json")); }), ErrorKind::model);

    auto missing = preset("leaf-healthy");
    missing.regions.erase(missing.regions.begin() + 1);  // blade material gone
    EXPECT_EQ(kind_of([&] { missing.validate(); }), ErrorKind::model);
    auto noisy = preset("leaf-healthy");
    noisy.noise_std = -1.0;
    EXPECT_EQ(kind_of([&] { noisy.validate(); }), ErrorKind::input);
}

TEST(LabelsCsv, RoundTripAndCoverage) {
    test::TempDir dir("phantom");
    const auto lc = synthesize(preset("leaf-healthy"));
    write_labels_csv(dir / "l.csv", LabelGrid{lc.cube.nx, lc.cube.ny, lc.labels});
    const auto back = read_labels_csv(dir / "l.csv");
    EXPECT_EQ(back.nx, lc.cube.nx);
    EXPECT_EQ(back.labels, lc.labels);
    {
        std::ofstream os(dir / "gap.csv");
        os << "x,y,label\n0,0,1\n1,1,1\n";
    }
    EXPECT_EQ(kind_of([&] { (void)read_labels_csv(dir / "gap.csv"); }), ErrorKind::input);
}

TEST(TruthJson, RootInfectedHasBandControlPoint) {
    test::TempDir dir("phantom");
    const auto lc = synthesize(preset("root-infected"));
    write_truth_json(dir / "t.json", lc.truth);
    std::ifstream is(dir / "t.json");
    const auto j = nlohmann::json::parse(is);
    bool found = false;
    for (const auto& r : j.at("regions"))
        for (const auto& p : r.at("material").at("points"))
            if (std::abs(p[0].get<double>() - 0.4) < 1e-12) found = true;
    EXPECT_TRUE(found);
}
