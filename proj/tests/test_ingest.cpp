#include "doctest.h"

#include <cmath>
#include <string>

#include "helpers.hpp"
#include "waterscreen/errors.hpp"
#include "waterscreen/ingest.hpp"

using namespace waterscreen;

namespace {

// Two zips, two years. P1 (groundwater) serves only 90001; P2 (surface)
// splits evenly between both zips. Worked aggregation values below.
struct RawFixture {
    wstest::TempDir dir;
    std::string samples = "pws_id,analyte,year,value\n"
                          "P1,a,2015,1\n"
                          "P1,a,2015,3\n"
                          "P2,a,2015,9\n"
                          "P1,b,2015,0\n"
                          "P1,a,2014,5\n"
                          "P9,a,2015,7\n";
    std::string lods = "analyte,lod\na,0.5\nb,2\n";
    std::string crosswalk = "pws_id,zip,weight\n"
                            "P1,90001,1.0\n"
                            "P2,90001,0.5\n"
                            "P2,90002,0.5\n";
    std::string sources = "pws_id,source_code\nP1,GW\nP2,SW\n";
    std::string demographics =
        "zip,year,population,median_income,age_u5,age_5_14,age_15_24,age_25_64,age_65p\n"
        "90001,2015,1000,50000,100,100,100,600,100\n"
        "90001,2016,1000,51000,100,100,100,600,100\n"
        "90002,2015,2000,40000,200,200,200,1200,200\n"
        "90002,2016,2000,41000,200,200,200,1200,200\n";
    std::string deaths = "zip,year,deaths,censored\n"
                         "90001,2015,12,0\n"
                         "90001,2016,15,0\n"
                         "90002,2015,8,0\n"
                         "90002,2016,0,1\n";
    std::string classes = "analyte,class\na,DBPs\n";

    IngestConfig cfg{2015, 2016, false};

    RawData read(IngestReport& report) {
        wstest::write_file(dir.file("samples.csv"), samples);
        wstest::write_file(dir.file("lods.csv"), lods);
        wstest::write_file(dir.file("crosswalk.csv"), crosswalk);
        wstest::write_file(dir.file("sources.csv"), sources);
        wstest::write_file(dir.file("demographics.csv"), demographics);
        wstest::write_file(dir.file("deaths.csv"), deaths);
        std::string cls;
        if (!classes.empty()) {
            wstest::write_file(dir.file("classes.csv"), classes);
            cls = dir.file("classes.csv");
        }
        return read_raw_files(dir.file("samples.csv"), dir.file("lods.csv"),
                              dir.file("crosswalk.csv"), dir.file("sources.csv"),
                              dir.file("demographics.csv"), dir.file("deaths.csv"), cls, cfg,
                              report);
    }
};

} // namespace

TEST_SUITE("ingest") {

TEST_CASE("impute_lod substitutes lod over root two for non-detects only") {
    CHECK(impute_lod(0.0, 2.0) == 2.0 / std::sqrt(2.0));
    CHECK(impute_lod(0.0, 0.07) == 0.07 / std::sqrt(2.0));
    CHECK(impute_lod(5.0, 2.0) == 5.0);
    CHECK_THROWS_AS(impute_lod(0.0, 0.0), ValidationError);
    CHECK_THROWS_AS(impute_lod(0.0, -1.0), ValidationError);
    CHECK_THROWS_AS(impute_lod(-0.1, 2.0), ValidationError);
}

TEST_CASE("weighted_median is the lower weighted median") {
    CHECK(weighted_median({1, 2, 3}, {1, 1, 1}) == 2.0);
    CHECK(weighted_median({1, 2}, {1, 1}) == 1.0);
    CHECK(weighted_median({3, 1, 9}, {0.1, 0.1, 5.0}) == 9.0);
    CHECK_THROWS_AS(weighted_median({1, 2}, {1}), ValidationError);
    CHECK_THROWS_AS(weighted_median({}, {}), ValidationError);
}

TEST_CASE("classify_groundwater flags GW or GWP anywhere in the set") {
    CHECK_FALSE(classify_groundwater({"SW"}));
    CHECK_FALSE(classify_groundwater({"SWP", "GU", "NA"}));
    CHECK(classify_groundwater({"SW", "GWP"}));
    CHECK(classify_groundwater({"GW"}));
    CHECK_THROWS_AS(classify_groundwater({}), ValidationError);
    CHECK_THROWS_AS(classify_groundwater({"XX"}), ValidationError);
}

TEST_CASE("age_shares converts counts to percent of population") {
    auto s = age_shares({100, 100, 100, 600, 100}, 1000.0);
    CHECK(s[0] == doctest::Approx(10.0));
    CHECK(s[3] == doctest::Approx(60.0));
    CHECK_THROWS_AS(age_shares({1, 1, 1, 1, 1}, 0.0), ValidationError);
}

TEST_CASE("aggregation weights split the crosswalk share across samples") {
    RawFixture fx;
    IngestReport report;
    RawData raw = fx.read(report);
    ZipYearPanel p = build_panel(raw, fx.cfg, report);

    CHECK(report.samples_total == 6);
    CHECK(report.samples_outside_window == 1);
    CHECK(report.samples_unmapped == 1);
    REQUIRE(report.unmapped_pws.size() == 1);
    CHECK(report.unmapped_pws[0] == "P9");
    CHECK(report.warnings.size() == 1);

    REQUIRE(p.zip_ids == std::vector<std::string>{"90001", "90002"});
    REQUIRE(p.year_values == std::vector<int>{2015, 2016});
    REQUIRE(p.n_rows() == 4);
    REQUIRE(p.n_analytes() == 2); // sorted: a, b
    CHECK(p.analyte_info[0].name == "a");
    CHECK(p.analyte_info[1].name == "b");
    CHECK(p.analyte_info[0].chem_class == "DBPs");
    CHECK(p.analyte_info[1].chem_class == "unknown");

    int r_z1_2015 = p.find_row(0, 0);
    int r_z2_2015 = p.find_row(1, 0);
    REQUIRE(r_z1_2015 >= 0);
    REQUIRE(r_z2_2015 >= 0);

    // 90001 'a' 2015 pools P1 {1,3} at weight 1.0/2 each with P2 {9} at 0.5;
    // cumulative weight passes half the 1.5 total at the value 3.
    CHECK(p.analytes(r_z1_2015, 0) == 3.0);
    // 90002 sees only P2's sample
    CHECK(p.analytes(r_z2_2015, 0) == 9.0);
    // single non-detect with LOD 2
    CHECK(p.analytes(r_z1_2015, 1) == 2.0 / std::sqrt(2.0));
    // no 2016 samples anywhere
    CHECK(std::isnan(p.analytes(p.find_row(0, 1), 0)));
    CHECK(std::isnan(p.analytes(p.find_row(1, 1), 1)));
}

TEST_CASE("panel rows carry shares in percent and the zip groundwater flag") {
    RawFixture fx;
    IngestReport report;
    RawData raw = fx.read(report);
    ZipYearPanel p = build_panel(raw, fx.cfg, report);

    int r1 = p.find_row(0, 0);
    CHECK(p.age_u5[r1] == doctest::Approx(10.0));
    CHECK(p.age_25_64[r1] == doctest::Approx(60.0));
    CHECK(p.population[r1] == 1000.0);
    CHECK(p.median_income[r1] == 50000.0);

    // 90001 touches P1 (GW); 90002 only P2 (SW)
    CHECK(p.groundwater[p.find_row(0, 0)] == 1.0);
    CHECK(p.groundwater[p.find_row(0, 1)] == 1.0);
    CHECK(p.groundwater[p.find_row(1, 0)] == 0.0);

    CHECK_FALSE(p.has_age_adjusted);
    int rc = p.find_row(1, 1);
    CHECK(p.censored[rc] == 1);
    CHECK(p.deaths[rc] == 0.0);
    CHECK(report.censored_rows_kept == 1);
}

TEST_CASE("drop_censored removes the censored row instead of keeping it") {
    RawFixture fx;
    fx.cfg.drop_censored = true;
    IngestReport report;
    RawData raw = fx.read(report);
    ZipYearPanel p = build_panel(raw, fx.cfg, report);
    CHECK(p.n_rows() == 3);
    CHECK(report.censored_rows_dropped == 1);
    CHECK(report.censored_rows_kept == 0);
}

TEST_CASE("age_adjusted_rate column is optional and carried when present") {
    RawFixture fx;
    fx.deaths = "zip,year,deaths,censored,age_adjusted_rate\n"
                "90001,2015,12,0,880.5\n"
                "90001,2016,15,0,900.1\n"
                "90002,2015,8,0,400\n"
                "90002,2016,9,0,410\n";
    IngestReport report;
    RawData raw = fx.read(report);
    ZipYearPanel p = build_panel(raw, fx.cfg, report);
    REQUIRE(p.has_age_adjusted);
    REQUIRE(p.age_adjusted_rate.size() == p.n_rows());
    CHECK(p.age_adjusted_rate[p.find_row(0, 0)] == 880.5);
}

TEST_CASE("zero-population rows drop out and are counted") {
    RawFixture fx;
    fx.demographics += "90003,2015,0,30000,0,0,0,0,0\n";
    fx.deaths += "90003,2015,3,0\n";
    IngestReport report;
    RawData raw = fx.read(report);
    ZipYearPanel p = build_panel(raw, fx.cfg, report);
    CHECK(report.zero_population_rows == 1);
    CHECK(p.zip_ids == std::vector<std::string>{"90001", "90002"});
}

TEST_CASE("demographics-deaths intersection defines the rows") {
    RawFixture fx;
    // demographics without a matching death record
    fx.demographics += "90004,2015,500,45000,50,50,50,300,50\n";
    IngestReport report;
    RawData raw = fx.read(report);
    ZipYearPanel p = build_panel(raw, fx.cfg, report);
    CHECK(p.n_rows() == 4);
    CHECK(p.zip_ids == std::vector<std::string>{"90001", "90002"});
}

TEST_CASE("a zip with no crosswalk entry is counted and left non-groundwater") {
    RawFixture fx;
    fx.demographics += "90005,2015,500,45000,50,50,50,300,50\n";
    fx.deaths += "90005,2015,2,0\n";
    IngestReport report;
    RawData raw = fx.read(report);
    ZipYearPanel p = build_panel(raw, fx.cfg, report);
    CHECK(report.zips_without_pws == 1);
    int zi = -1;
    for (std::size_t i = 0; i < p.zip_ids.size(); ++i)
        if (p.zip_ids[i] == "90005") zi = static_cast<int>(i);
    REQUIRE(zi >= 0);
    CHECK(p.groundwater[p.find_row(zi, 0)] == 0.0);
}

TEST_CASE("a pws missing from sources is treated as unknown, not fatal") {
    RawFixture fx;
    fx.sources = "pws_id,source_code\nP1,GW\n"; // P2 absent
    IngestReport report;
    RawData raw = fx.read(report);
    ZipYearPanel p = build_panel(raw, fx.cfg, report);
    CHECK(report.pws_without_source >= 1);
    CHECK(p.groundwater[p.find_row(1, 0)] == 0.0);
}

TEST_CASE("schema violations are validation errors") {
    IngestReport report;
    SUBCASE("duplicate lod entry") {
        RawFixture fx;
        fx.lods = "analyte,lod\na,0.5\na,0.6\nb,2\n";
        CHECK_THROWS_AS(fx.read(report), ValidationError);
    }
    SUBCASE("nonpositive lod") {
        RawFixture fx;
        fx.lods = "analyte,lod\na,0\nb,2\n";
        CHECK_THROWS_AS(fx.read(report), ValidationError);
    }
    SUBCASE("crosswalk weight outside the unit interval") {
        RawFixture fx;
        fx.crosswalk = "pws_id,zip,weight\nP1,90001,1.5\nP2,90001,0.5\nP2,90002,0.5\n";
        CHECK_THROWS_AS(fx.read(report), ValidationError);
    }
    SUBCASE("crosswalk weights summing above one per pws") {
        RawFixture fx;
        fx.crosswalk = "pws_id,zip,weight\nP1,90001,0.8\nP1,90002,0.8\nP2,90002,0.5\n";
        CHECK_THROWS_AS(fx.read(report), ValidationError);
    }
    SUBCASE("duplicate crosswalk pair") {
        RawFixture fx;
        fx.crosswalk = "pws_id,zip,weight\nP1,90001,0.3\nP1,90001,0.3\nP2,90002,0.5\n";
        CHECK_THROWS_AS(fx.read(report), ValidationError);
    }
    SUBCASE("unknown source code") {
        RawFixture fx;
        fx.sources = "pws_id,source_code\nP1,GROUND\nP2,SW\n";
        CHECK_THROWS_AS(fx.read(report), ValidationError);
    }
    SUBCASE("negative sample value") {
        RawFixture fx;
        fx.samples = "pws_id,analyte,year,value\nP1,a,2015,-1\n";
        CHECK_THROWS_AS(fx.read(report), ValidationError);
    }
    SUBCASE("censored row reporting deaths") {
        RawFixture fx;
        fx.deaths = "zip,year,deaths,censored\n90001,2015,5,1\n";
        CHECK_THROWS_AS(fx.read(report), ValidationError);
    }
    SUBCASE("duplicate deaths row") {
        RawFixture fx;
        fx.deaths = "zip,year,deaths,censored\n90001,2015,5,0\n90001,2015,6,0\n";
        CHECK_THROWS_AS(fx.read(report), ValidationError);
    }
    SUBCASE("duplicate demographics row") {
        RawFixture fx;
        fx.demographics =
            "zip,year,population,median_income,age_u5,age_5_14,age_15_24,age_25_64,age_65p\n"
            "90001,2015,1000,50000,100,100,100,600,100\n"
            "90001,2015,1000,50000,100,100,100,600,100\n";
        CHECK_THROWS_AS(fx.read(report), ValidationError);
    }
}

TEST_CASE("age counts above population fail past 2%, flag within it") {
    IngestReport report;
    SUBCASE("within tolerance is a flag") {
        RawFixture fx;
        // total 1015 on population 1000: 1.5% over
        fx.demographics =
            "zip,year,population,median_income,age_u5,age_5_14,age_15_24,age_25_64,age_65p\n"
            "90001,2015,1000,50000,103,103,103,603,103\n";
        fx.read(report);
        CHECK(report.age_excess_flagged == 1);
    }
    SUBCASE("past tolerance is an error") {
        RawFixture fx;
        fx.demographics =
            "zip,year,population,median_income,age_u5,age_5_14,age_15_24,age_25_64,age_65p\n"
            "90001,2015,1000,50000,110,110,110,700,110\n";
        CHECK_THROWS_AS(fx.read(report), ValidationError);
    }
}

TEST_CASE("a non-detect without an lod entry fails at aggregation") {
    RawFixture fx;
    fx.samples = "pws_id,analyte,year,value\nP1,c,2015,0\n";
    IngestReport report;
    RawData raw = fx.read(report);
    CHECK_THROWS_AS(build_panel(raw, fx.cfg, report), ValidationError);
}

} // TEST_SUITE
