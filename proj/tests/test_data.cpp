#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "selfonn/selfonn.hpp"
#include "test_util.hpp"

using namespace selfonn;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

DatasetManifest manifest_with(std::array<std::size_t, kNumClasses> counts) {
    DatasetManifest m;
    for (std::size_t c = 0; c < kNumClasses; ++c)
        for (std::size_t i = 0; i < counts[c]; ++i) m.add(std::string(kClassNames[c]) + "/" + std::to_string(i) + ".pgm", c);
    return m;
}

// Same class totals, but records of the three classes interleaved.
DatasetManifest interleaved(std::array<std::size_t, kNumClasses> counts) {
    DatasetManifest m;
    std::array<std::size_t, kNumClasses> left = counts;
    for (std::size_t i = 0; left[0] + left[1] + left[2] > 0; ++i) {
        const std::size_t c = i % 3;
        if (left[c] == 0) continue;
        m.add("f" + std::to_string(i), c);
        --left[c];
    }
    return m;
}

} // namespace

// ---- PGM ----

TEST(Pgm, RoundTrip) {
    const ThermalImage img(3, 2, {0, 1, 255, 256, 40000, 65535});
    const auto bytes = encode_pgm16(img);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 13), "P5\n3 2\n65535\n");
    EXPECT_EQ(bytes.size(), 13u + 12u);
    EXPECT_EQ(bytes[13 + 6], 0x01); // 256 big endian
    EXPECT_EQ(bytes[13 + 7], 0x00);
    EXPECT_EQ(decode_pgm16(bytes), img);

    const auto dir = selfonn::testing::scratch_dir("pgm_rt");
    write_pgm16(img, dir / "a.pgm");
    EXPECT_EQ(load_pgm16(dir / "a.pgm"), img);
}

TEST(Pgm, HeaderWithCommentsAndWhitespace) {
    std::string s = "P5 # comment\n# another\n2\t1\r\n65535\n";
    s += std::string{'\x12', '\x34', '\xAB', '\xCD'};
    const ThermalImage img = decode_pgm16(bytes_of(s));
    EXPECT_EQ(img.width, 2u);
    EXPECT_EQ(img.pixels, (std::vector<std::uint16_t>{0x1234, 0xABCD}));
}

TEST(Pgm, ErrorsCarryByteOffsets) {
    auto offset_of = [](const std::string& s) -> std::size_t {
        try {
            decode_pgm16(bytes_of(s));
        } catch (const ParseError& e) {
            return e.offset();
        }
        ADD_FAILURE() << "no ParseError for " << s;
        return 999;
    };
    EXPECT_EQ(offset_of("P2\n1 1\n65535\n"), 0u);
    EXPECT_EQ(offset_of("P6\n"), 0u);
    EXPECT_EQ(offset_of("P5\n1 1\n255\nxx"), 7u);                     // maxval
    EXPECT_EQ(offset_of("P5\nab 1\n65535\n"), 3u);                     // width
    EXPECT_EQ(offset_of("P5\n2 2\n65535\n\x01\x02"), 15u);             // raster short: offset = file size
    EXPECT_EQ(offset_of("P5\n2"), 4u);                                 // header truncated
    EXPECT_EQ(offset_of("P5\n0 2\n65535\n"), 3u);                      // zero width
    EXPECT_EQ(offset_of("P5\n2 # c\n0\n65535\n"), 9u);                // zero height after a comment
    EXPECT_THROW(load_pgm16("/nonexistent/x.pgm"), IoError);
}

TEST(Pgm, LoadErrorNamesFile) {
    const auto dir = selfonn::testing::scratch_dir("pgm_err");
    std::ofstream(dir / "bad.pgm") << "P5\n1 1\n255\n";
    try {
        load_pgm16(dir / "bad.pgm");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("bad.pgm"), std::string::npos);
        EXPECT_EQ(e.offset(), 7u);
    }
}

// ---- resize ----

TEST(Resize, BlockMeanRoundedHalfUp) {
    const ThermalImage img(4, 2, {1, 2, 10, 10, 3, 4, 10, 11});
    const ThermalImage out = resize_half(img);
    ASSERT_EQ(out.width, 2u);
    ASSERT_EQ(out.height, 1u);
    EXPECT_EQ(out.pixels[0], 3);  // 10/4 = 2.5 -> 3
    EXPECT_EQ(out.pixels[1], 10); // 41/4 = 10.25 -> 10
    const ThermalImage top(2, 2, {65535, 65535, 65535, 65535});
    EXPECT_EQ(resize_half(top).pixels[0], 65535);
    EXPECT_THROW(resize_half(ThermalImage(3, 2)), InputError);
}

TEST(Resize, FullFrameShapeAndMeanBound) {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> d(0, 65535);
    ThermalImage img(640, 512);
    for (auto& p : img.pixels) p = static_cast<std::uint16_t>(d(rng));
    const ThermalImage out = resize_half(img);
    EXPECT_EQ(out.width, 320u);
    EXPECT_EQ(out.height, 256u);
    const double in_mean = std::accumulate(img.pixels.begin(), img.pixels.end(), 0.0) / img.pixels.size();
    const double out_mean = std::accumulate(out.pixels.begin(), out.pixels.end(), 0.0) / out.pixels.size();
    // Rounding moves each block mean by at most half a code.
    EXPECT_LE(std::abs(in_mean - out_mean), 0.5);
}

// ---- normalisation ----

TEST(Normalize, MinMaxExamples) {
    const ThermalImage img(3, 1, {100, 150, 200});
    const Tensor t = normalize_minmax(img);
    EXPECT_EQ(t.shape(), (Shape{1, 1, 3}));
    EXPECT_EQ(t[0], 0.0);
    EXPECT_NEAR(t[1], 0.5, 1e-9);
    EXPECT_LT(t[2], 1.0);
    EXPECT_NEAR(t[2], 1.0, 1e-9);
    const Tensor flat = normalize_minmax(ThermalImage(2, 2, 777));
    for (double v : flat.data()) EXPECT_EQ(v, 0.0);
    EXPECT_THROW(normalize_minmax(ThermalImage()), InputError);
}

TEST(Normalize, RangeIsHalfOpenUnitInterval) {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> d(1000, 50000);
    ThermalImage img(17, 9);
    for (auto& p : img.pixels) p = static_cast<std::uint16_t>(d(rng));
    const Tensor t = normalize_minmax(img);
    for (double v : t.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    const Tensor r = normalize_with_range(img, 0.0, 65535.0);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(r[i], img.pixels[i] / 65535.0, 1e-12);
}

// ---- manifest ----

TEST(Manifest, ParseAndWrite) {
    std::istringstream in("# header\nhealthy/0.pgm\thealthy\n\nmis/0.pgm\tMisalignment\r\nbr/0.pgm\tBroken Rotor\n"
                          "healthy/1.pgm\tHealthy\n");
    const DatasetManifest m = parse_manifest(in, "/data");
    ASSERT_EQ(m.size(), 4u);
    EXPECT_EQ(m.records[1].label, 1u);
    EXPECT_EQ(m.records[2].label, 2u);
    EXPECT_EQ(m.records[3].ordinal, 1u);
    EXPECT_EQ(m.class_counts, (std::array<std::size_t, 3>{2, 1, 1}));
    std::ostringstream out;
    write_manifest(m, out);
    EXPECT_EQ(out.str(), "healthy/0.pgm\thealthy\nmis/0.pgm\tmisalignment\nbr/0.pgm\tbroken_rotor\nhealthy/1.pgm\thealthy\n");
}

TEST(Manifest, ErrorsNameTheLine) {
    std::istringstream no_tab("a.pgm\thealthy\nb.pgm healthy\n");
    try {
        parse_manifest(no_tab);
        FAIL();
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
    std::istringstream bad_class("a.pgm\toverheated\n");
    EXPECT_THROW(parse_manifest(bad_class), InputError);
    EXPECT_THROW(load_manifest("/nonexistent/manifest.txt"), IoError);
}

TEST(Manifest, ClassNameSpellings) {
    EXPECT_EQ(parse_class_name("broken-rotor"), 2u);
    EXPECT_EQ(parse_class_name("BROKEN_ROTOR"), 2u);
    EXPECT_EQ(parse_class_name(" Healthy "), 0u);
    EXPECT_THROW(parse_class_name("rotor"), InputError);
}

// ---- folds ----

TEST(Folds, ReferenceFoldTable) {
    const FoldPlan plan = stratified_ordered_kfold(manifest_with({2244, 1799, 1610}));
    const std::array<std::size_t, 5> healthy{449, 449, 449, 449, 448}, mis{360, 360, 360, 359, 360},
        broken{322, 322, 322, 322, 322};
    for (std::size_t f = 0; f < 5; ++f) {
        EXPECT_EQ(plan.counts[f][0], healthy[f]) << "fold " << f + 1;
        EXPECT_EQ(plan.counts[f][1], mis[f]) << "fold " << f + 1;
        EXPECT_EQ(plan.counts[f][2], broken[f]) << "fold " << f + 1;
    }
    const std::string table = format_fold_table(plan);
    EXPECT_NE(table.find("Healthy           449    449    449    449    448    2244"), std::string::npos) << table;
    EXPECT_NE(table.find("Misalignment      360    360    360    359    360    1799"), std::string::npos) << table;
}

TEST(Folds, SevenSamplesSplitTwoTwoOneOneOne) {
    EXPECT_EQ(class_fold_sizes(7, 5, {}), (std::vector<std::size_t>{2, 2, 1, 1, 1}));
    EXPECT_EQ(class_fold_sizes(7, 5, {4, 3, 2, 1, 0}), (std::vector<std::size_t>{1, 1, 1, 2, 2}));
    EXPECT_EQ(class_fold_sizes(7, 5, {0, 0, 1, 2, 3}), (std::vector<std::size_t>{2, 2, 1, 1, 1}));
    const FoldPlan plan = stratified_ordered_kfold(manifest_with({7, 7, 7}), 5, RemainderPlacement{});
    EXPECT_EQ(plan.fold_of[0], 0u);
    EXPECT_EQ(plan.fold_of[1], 0u);
    EXPECT_EQ(plan.fold_of[2], 1u);
    EXPECT_EQ(plan.fold_of[4], 2u);
    EXPECT_EQ(plan.fold_of[6], 4u);
}

TEST(Folds, ContiguousPartitionInManifestOrder) {
    for (const auto& m : {manifest_with({23, 19, 12}), interleaved({23, 19, 12})}) {
        const FoldPlan plan = stratified_ordered_kfold(m);
        ASSERT_EQ(plan.fold_of.size(), m.size());
        std::array<std::size_t, 3> last{};
        std::size_t total = 0;
        for (std::size_t f = 0; f < 5; ++f) {
            total += plan.members(f).size();
            for (std::size_t c = 0; c < 3; ++c) {
                const std::size_t n = m.class_counts[c];
                EXPECT_TRUE(plan.counts[f][c] == n / 5 || plan.counts[f][c] == n / 5 + 1);
            }
        }
        EXPECT_EQ(total, m.size());
        // Within a class, fold ids never decrease along the manifest.
        for (std::size_t i = 0; i < m.size(); ++i) {
            const std::size_t c = m.records[i].label;
            EXPECT_GE(plan.fold_of[i], last[c]);
            last[c] = plan.fold_of[i];
        }
    }
}

TEST(Folds, ClassTooSmall) {
    EXPECT_THROW(stratified_ordered_kfold(manifest_with({4, 10, 10})), InputError);
    EXPECT_THROW(stratified_ordered_kfold(manifest_with({10, 10, 10}), 1), InputError);
}

TEST(Folds, CrossValidationRotation) {
    const DatasetManifest m = interleaved({11, 12, 13});
    const FoldPlan plan = stratified_ordered_kfold(m);
    const auto splits = make_cv_splits(plan);
    ASSERT_EQ(splits.size(), 5u);
    std::vector<std::size_t> tested;
    for (const auto& s : splits) {
        EXPECT_EQ(s.val_fold, (s.test_fold + 1) % 5);
        std::set<std::size_t> all;
        all.insert(s.train.begin(), s.train.end());
        all.insert(s.val.begin(), s.val.end());
        all.insert(s.test.begin(), s.test.end());
        EXPECT_EQ(all.size(), m.size());
        EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), m.size());
        for (auto i : s.test) EXPECT_EQ(plan.fold_of[i], s.test_fold);
        for (auto i : s.val) EXPECT_EQ(plan.fold_of[i], s.val_fold);
        tested.insert(tested.end(), s.test.begin(), s.test.end());
    }
    std::sort(tested.begin(), tested.end());
    EXPECT_EQ(tested, all_indices(m.size()));
}

TEST(Folds, PlanFileRoundTrip) {
    const DatasetManifest m = interleaved({9, 8, 7});
    const FoldPlan plan = stratified_ordered_kfold(m);
    std::stringstream ss;
    write_fold_plan(plan, m, ss);
    EXPECT_EQ(read_fold_plan(ss), plan);

    std::istringstream missing_k("0\t1\thealthy\n");
    EXPECT_THROW(read_fold_plan(missing_k), InputError);
    std::istringstream gap("k = 5\n0\t1\thealthy\n2\t1\thealthy\n");
    EXPECT_THROW(read_fold_plan(gap), InputError);
    std::istringstream fold_range("k = 5\n0\t6\thealthy\n");
    EXPECT_THROW(read_fold_plan(fold_range), InputError);
}

// ---- synthetic corpus ----

TEST(Synth, DeterministicPerSeedLabelIndex) {
    SynthConfig cfg;
    cfg.width = 64;
    cfg.height = 48;
    cfg.seed = 7;
    EXPECT_EQ(synth_image(cfg, 1, 3), synth_image(cfg, 1, 3));
    EXPECT_NE(synth_image(cfg, 1, 3), synth_image(cfg, 1, 4));
    EXPECT_NE(synth_image(cfg, 1, 3), synth_image(cfg, 2, 3));
    SynthConfig other = cfg;
    other.seed = 8;
    EXPECT_NE(synth_image(cfg, 1, 3), synth_image(other, 1, 3));
    EXPECT_THROW(synth_image(cfg, 3, 0), InputError);
}

TEST(Synth, CorpusStaysWithinClassStatistics) {
    SynthConfig cfg;
    cfg.width = 160;
    cfg.height = 128;
    cfg.counts = {12, 12, 12};
    cfg.seed = 3;
    const auto dir = selfonn::testing::scratch_dir("synth");
    const SynthResult res = synth_generate(cfg, dir);
    ASSERT_EQ(res.manifest.size(), 36u);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& s = res.summary[c];
        const auto& ref = kReferenceTemperatureStats[c];
        EXPECT_NEAR(s.mean_c, ref.mean_c, 1.5) << kClassNames[c];
        EXPECT_GE(s.min_c, ref.min_c - 0.01);
        EXPECT_LE(s.max_c, ref.max_c + 0.01);
        EXPECT_GT(s.std_c, 0.5 * ref.std_c);
    }
    const DatasetManifest m = load_manifest(dir / "manifest.txt");
    EXPECT_EQ(m.class_counts, (std::array<std::size_t, 3>{12, 12, 12}));
    EXPECT_EQ(load_pgm16(dir / m.records[13].path), synth_image(cfg, 1, 1));
    EXPECT_TRUE(std::filesystem::exists(dir / "synth_report.txt"));
}

TEST(Synth, RawCodesStayInsideBounds) {
    SynthConfig cfg;
    for (double t : {23.0, 38.62, 82.43}) {
        const auto raw = celsius_to_raw(t, 23.0, 82.43, cfg);
        const double back = raw_to_celsius(raw, cfg);
        EXPECT_GE(back, 23.0);
        EXPECT_LE(back, 82.43);
        EXPECT_NEAR(back, t, 0.01);
    }
    SynthConfig bad;
    bad.stats[0].mean_c = 100.0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Dataset, LoadResizesAndNormalises) {
    SynthConfig cfg;
    cfg.width = 32;
    cfg.height = 16;
    cfg.counts = {2, 2, 2};
    const auto dir = selfonn::testing::scratch_dir("load_ds");
    synth_generate(cfg, dir);
    const DatasetManifest m = load_manifest(dir / "manifest.txt");
    const auto samples = load_dataset(m);
    ASSERT_EQ(samples.size(), 6u);
    EXPECT_EQ(samples[0].input.shape(), (Shape{1, 8, 16}));
    EXPECT_EQ(samples[5].label, 2u);
    double lo = 1, hi = 0;
    for (double v : samples[2].input.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    EXPECT_EQ(lo, 0.0);
    EXPECT_GT(hi, 0.999);

    PreprocessOptions opt;
    opt.resize_half = false;
    opt.normalization = NormalizationMode::dataset;
    const auto ds = load_dataset(m, opt);
    EXPECT_EQ(ds[0].input.shape(), (Shape{1, 16, 32}));
    double gmin = 1, gmax = 0;
    for (const auto& s : ds)
        for (double v : s.input.data()) {
            gmin = std::min(gmin, v);
            gmax = std::max(gmax, v);
        }
    EXPECT_EQ(gmin, 0.0);
    EXPECT_LT(gmax, 1.0);
    EXPECT_GT(gmax, 0.999);
}
