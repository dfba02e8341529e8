#include <algorithm>
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "kinegen/errors.hpp"
#include "kinegen/eval_metrics.hpp"
#include "kinegen/profile_data.hpp"
#include "kinegen/text.hpp"
#include "test_util.hpp"

using namespace kinegen;
using namespace kinegen::data;

namespace {

VelocityProfile ramp(std::size_t n, double dt = 0.1)
{
    VelocityProfile p;
    p.dt = dt;
    for (std::size_t k = 0; k < n; ++k)
        p.samples.push_back(static_cast<double>(k) / static_cast<double>(n - 1));
    return p;
}

}  // namespace

TEST_CASE("class codes and names")
{
    CHECK(static_cast<int>(CarefulnessClass::NotCareful) == 0);
    CHECK(static_cast<int>(CarefulnessClass::Careful) == 1);
    CHECK(parse_class("C") == CarefulnessClass::Careful);
    CHECK(parse_class("nc") == CarefulnessClass::NotCareful);
    CHECK(parse_class("1") == CarefulnessClass::Careful);
    CHECK(parse_class("NotCareful") == CarefulnessClass::NotCareful);
    CHECK_THROWS_AS(parse_class("maybe"), ArgumentError);
    CHECK_THROWS_AS(class_from_code(2), ArgumentError);
}

TEST_CASE("velocity profile invariants")
{
    VelocityProfile p{{0.0, 1.0, 0.0}, 0.5, std::nullopt};
    CHECK_NOTHROW(p.validate());
    CHECK(p.duration() == doctest::Approx(1.0));
    CHECK(p.peak() == 1.0);
    CHECK(p.dt == doctest::Approx(0.5));
    CHECK(VelocityProfile{}.dt == doctest::Approx(1.0 / 22.0));

    auto bad = p;
    bad.samples[1] = -0.1;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    bad = p;
    bad.samples = {0.0};
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    bad = p;
    bad.dt = 0.0;
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
    bad = p;
    bad.samples[1] = std::nan("");
    CHECK_THROWS_AS(bad.validate(), ArgumentError);
}

TEST_CASE("minimum-jerk shape")
{
    CHECK(min_jerk_shape(0.0) == 0.0);
    CHECK(min_jerk_shape(1.0) == 0.0);
    CHECK(min_jerk_shape(0.5) == doctest::Approx(1.875).epsilon(1e-15));
    // 30(0.25)^2 - 60(0.25)^3 + 30(0.25)^4 by hand
    CHECK(min_jerk_shape(0.25) == doctest::Approx(1.875 - 0.9375 + 0.1171875));
    // Unit area: integral of 30t^2(1-t)^2 over [0, 1] is 1.
    double area = 0.0;
    const int n = 100000;
    for (int k = 0; k < n; ++k)
        area += min_jerk_shape((k + 0.5) / n) / n;
    CHECK(area == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("synth_profile")
{
    SynthConfig cfg;
    SUBCASE("determinism")
    {
        Rng a(123), b(123);
        CHECK(synth_profile(CarefulnessClass::Careful, a, cfg) == synth_profile(CarefulnessClass::Careful, b, cfg));
    }
    SUBCASE("noise-free profile equals the scaled quartic")
    {
        cfg.noise_fraction = 0.0;
        Rng rng(7);
        const auto p = synth_profile(CarefulnessClass::NotCareful, rng, cfg);
        // Re-draw the same duration and peak with an identical generator.
        Rng replay(7);
        std::uniform_real_distribution<double> dur(0.8, 1.4), pk(0.6, 1.0);
        const double T = dur(replay);
        const double peak = pk(replay);
        CHECK(p.samples.size() == static_cast<std::size_t>(std::ceil(T / cfg.dt - 1e-9)) + 1);
        for (std::size_t k = 0; k < p.samples.size(); ++k) {
            const double tau = std::min(1.0, k * cfg.dt / T);
            const double expect = peak / 1.875 * (30 * tau * tau - 60 * tau * tau * tau + 30 * tau * tau * tau * tau);
            CHECK(p.samples[k] == doctest::Approx(std::max(0.0, expect)).epsilon(1e-12));
        }
        CHECK(p.label == CarefulnessClass::NotCareful);
    }
    SUBCASE("invalid ranges")
    {
        cfg.careful.duration_min = -1.0;
        Rng rng(1);
        CHECK_THROWS_AS(synth_profile(CarefulnessClass::Careful, rng, cfg), ConfigError);
        cfg = SynthConfig{};
        cfg.not_careful.peak_max = 0.1;  // below peak_min
        CHECK_THROWS_AS(synth_profile(CarefulnessClass::NotCareful, rng, cfg), ConfigError);
    }
}

TEST_CASE("make_dataset defaults")
{
    const auto corpus = make_dataset({}, 42);
    CHECK(corpus.profiles.size() == 1001);
    CHECK(corpus.count(CarefulnessClass::NotCareful) == 499);
    CHECK(corpus.count(CarefulnessClass::Careful) == 502);
    CHECK_NOTHROW(corpus.validate_split());
    CHECK(corpus.heldout.size() == 100);

    std::vector<double> nc, c;
    double max_c = 0.0, min_nc = 1e9;
    for (const auto& p : corpus.profiles) {
        CHECK_NOTHROW(p.validate());
        CHECK(p.samples.front() == 0.0);
        CHECK(p.samples.back() == 0.0);
        if (p.label == CarefulnessClass::Careful) {
            c.push_back(p.peak());
            max_c = std::max(max_c, p.peak());
        } else {
            nc.push_back(p.peak());
            min_nc = std::min(min_nc, p.peak());
        }
    }
    CHECK(eval::quantile(c, 0.5) < eval::quantile(nc, 0.5));
    CHECK(max_c < min_nc);

    // Normalization comes from the training split only.
    const auto expect = compute_norm_stats(corpus.profiles, corpus.train);
    CHECK(corpus.normalization == expect);
    double train_max = 0.0;
    for (auto i : corpus.train)
        train_max = std::max(train_max, corpus.profiles[i].peak());
    CHECK(corpus.normalization.max == train_max);

    CHECK(make_dataset({}, 42) == corpus);
    CHECK_FALSE(make_dataset({}, 43) == corpus);
}

TEST_CASE("make_dataset small and invalid counts")
{
    SynthConfig cfg;
    cfg.count_not_careful = 1;
    cfg.count_careful = 1;
    const auto corpus = make_dataset(cfg, 1);
    REQUIRE(corpus.profiles.size() == 2);
    CHECK(corpus.count(CarefulnessClass::NotCareful) == 1);
    CHECK(corpus.count(CarefulnessClass::Careful) == 1);

    cfg.count_careful = 0;
    CHECK_THROWS_AS(make_dataset(cfg, 1), ConfigError);
    cfg.count_not_careful = 0;
    CHECK_THROWS_AS(make_dataset(cfg, 1), ConfigError);
}

TEST_CASE("resample")
{
    SUBCASE("hand-computed triangle")
    {
        const VelocityProfile p{{0.0, 2.0, 0.0}, 0.5, std::nullopt};
        const auto r = resample(p, 5);
        REQUIRE(r.samples.size() == 5);
        const double expect[] = {0.0, 1.0, 2.0, 1.0, 0.0};
        for (int k = 0; k < 5; ++k)
            CHECK(r.samples[k] == doctest::Approx(expect[k]).epsilon(1e-15));
        CHECK(r.dt == doctest::Approx(0.25));
        CHECK(r.duration() == doctest::Approx(p.duration()));
    }
    SUBCASE("same length is identity")
    {
        const auto p = ramp(17);
        CHECK(resample(p, 17).samples == p.samples);
    }
    SUBCASE("ramp stays a ramp and round trips through 2n")
    {
        for (std::size_t n : {2u, 3u, 10u, 64u}) {
            const auto p = ramp(23);
            const auto r = resample(p, n);
            for (std::size_t k = 0; k < n; ++k)
                CHECK(r.samples[k] == doctest::Approx(static_cast<double>(k) / (n - 1)).epsilon(1e-12));
            const auto back = resample(resample(r, 2 * n), n);
            for (std::size_t k = 0; k < n; ++k)
                CHECK(back.samples[k] == doctest::Approx(r.samples[k]).epsilon(1e-12));
        }
    }
    SUBCASE("endpoints preserved")
    {
        const auto corpus = make_dataset({}, 5);
        for (std::size_t i = 0; i < 20; ++i) {
            const auto& p = corpus.profiles[i];
            const auto r = resample(p, 64);
            CHECK(r.samples.front() == p.samples.front());
            CHECK(r.samples.back() == p.samples.back());
            CHECK(r.duration() == doctest::Approx(p.duration()).epsilon(1e-12));
            CHECK(r.label == p.label);
        }
    }
    CHECK_THROWS_AS(resample(ramp(5), 1), ArgumentError);
}

TEST_CASE("normalize and denormalize")
{
    const NormStats s{0.2, 1.2};
    const VelocityProfile p{{0.2, 0.7, 1.2}, 0.1, std::nullopt};
    const auto n = normalize(p, s);
    CHECK(n.samples[0] == 0.0);
    CHECK(n.samples[1] == doctest::Approx(0.5));
    CHECK(n.samples[2] == 1.0);

    Rng rng(9);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    VelocityProfile r;
    for (int k = 0; k < 200; ++k)
        r.samples.push_back(u(rng));
    const auto back = denormalize(normalize(r, s), s);
    double worst = 0.0;
    for (std::size_t k = 0; k < r.samples.size(); ++k)
        worst = std::max(worst, std::abs(back.samples[k] - r.samples[k]));
    CHECK(worst < 1e-12);

    CHECK_THROWS_AS(normalize(p, NormStats{1.0, 1.0}), ConfigError);
    CHECK_THROWS_AS(denormalize(p, NormStats{2.0, 1.0}), ConfigError);
}

TEST_CASE("corpus round trip")
{
    testutil::TempDir dir;
    const auto corpus = make_dataset({}, 11);
    const auto path = dir / "corpus.csv";
    save_corpus(corpus, path);
    CHECK(std::filesystem::exists(manifest_path_for(path)));
    const auto loaded = load_corpus(path);
    CHECK(loaded == corpus);

    // Byte-identical on rewrite.
    const auto first = text::read_file(path);
    save_corpus(loaded, path);
    CHECK(text::read_file(path) == first);
}

TEST_CASE("profiles CSV without manifest")
{
    testutil::TempDir dir;
    std::vector<VelocityProfile> ps{{{0.0, 0.5, 0.0}, 0.1, CarefulnessClass::Careful},
                                    {{0.0, 1.5, 1.0, 0.0}, 0.2, std::nullopt}};
    write_profiles_csv(ps, dir / "p.csv");
    CHECK(text::read_file(dir / "p.csv").rfind("profile_id,label,dt,sample_index,speed_mps\n", 0) == 0);
    CHECK(read_profiles_csv(dir / "p.csv") == ps);
    const auto corpus = load_corpus(dir / "p.csv");
    CHECK(corpus.train.size() == 2);
    CHECK(corpus.heldout.empty());
    CHECK(corpus.normalization.min == 0.0);
    CHECK(corpus.normalization.max == 1.5);
}

TEST_CASE("malformed corpus files")
{
    testutil::TempDir dir;
    auto write = [&](const std::string& name, const std::string& body) {
        std::ofstream(dir / name) << body;
        return dir / name;
    };
    const std::string header = "profile_id,label,dt,sample_index,speed_mps\n";

    SUBCASE("empty file")
    {
        CHECK_THROWS_AS(load_corpus(write("empty.csv", "")), ParseError);
    }
    SUBCASE("header only")
    {
        CHECK_THROWS_AS(load_corpus(write("header.csv", header)), ParseError);
    }
    SUBCASE("negative speed names the record")
    {
        const auto p = write("neg.csv", header + "0,1,0.1,0,0\n0,1,0.1,1,0.5\n1,0,0.1,0,0\n1,0,0.1,1,-0.2\n");
        try {
            (void)load_corpus(p);
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("profile_id=1") != std::string::npos);
            CHECK(msg.find(":5:") != std::string::npos);
        }
    }
    SUBCASE("bad header, field count, label, ids")
    {
        CHECK_THROWS_AS(load_corpus(write("h.csv", "id,speed\n0,1\n")), ParseError);
        CHECK_THROWS_AS(load_corpus(write("f.csv", header + "0,1,0.1,0\n")), ParseError);
        CHECK_THROWS_AS(load_corpus(write("l.csv", header + "0,7,0.1,0,0\n0,7,0.1,1,0\n")), ParseError);
        CHECK_THROWS_AS(load_corpus(write("i.csv", header + "1,0,0.1,0,0\n1,0,0.1,1,0\n")), ParseError);
        CHECK_THROWS_AS(load_corpus(write("s.csv", header + "0,0,0.1,0,0\n")), ParseError);
    }
    SUBCASE("missing file")
    {
        CHECK_THROWS_AS(load_corpus(dir / "nope.csv"), IoError);
    }
}
