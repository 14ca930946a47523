#include "test_support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace conflasso;

TEST(Csv, LastColumnIsResponse) {
    std::istringstream in("1,2\n3,4\n5,6");
    Dataset d = ingest_csv(in);
    EXPECT_EQ(d.n(), 3);
    EXPECT_EQ(d.p(), 1);
    EXPECT_EQ(d.X()(2, 0), 5.0);
    EXPECT_EQ(d.y()(1), 4.0);
}

TEST(Csv, HeaderCrlfAndBlankLines) {
    std::istringstream in("x1,x2,y\r\n1, 2 ,3\r\n\r\n-4.5e0,5,6\r\n");
    Dataset d = ingest_csv(in, true);
    EXPECT_EQ(d.n(), 2);
    EXPECT_EQ(d.p(), 2);
    EXPECT_EQ(d.X()(1, 0), -4.5);
}

TEST(Csv, NanReportsLocation) {
    std::istringstream in("1,2\n3,NaN\n");
    try {
        ingest_csv(in);
        FAIL() << "expected non_finite_value";
    } catch (const non_finite_value& e) {
        EXPECT_EQ(e.row(), 2u);
        EXPECT_EQ(e.column(), 2u);
        EXPECT_EQ(e.token(), "NaN");
    }
    std::istringstream inf("inf,1\n");
    EXPECT_THROW(ingest_csv(inf), non_finite_value);
}

TEST(Csv, RaggedRowReportsRow) {
    std::istringstream in("1,2,3\n4,5\n");
    try {
        ingest_csv(in);
        FAIL() << "expected parse_error";
    } catch (const parse_error& e) {
        EXPECT_EQ(e.row(), 2u);
    }
}

TEST(Csv, RejectsGarbageAndEmptyFields) {
    std::istringstream a("1,abc\n");
    EXPECT_THROW(ingest_csv(a), parse_error);
    std::istringstream b("1,,2\n");
    EXPECT_THROW(ingest_csv(b), parse_error);
    std::istringstream c("1,2,\n");
    EXPECT_THROW(ingest_csv(c), parse_error);
    std::istringstream d("");
    EXPECT_THROW(ingest_csv(d), input_error);
    std::istringstream e("1\n2\n");
    EXPECT_THROW(ingest_csv(e), input_error);
    EXPECT_THROW(ingest_csv(std::string("/nonexistent/file.csv")), input_error);
}

TEST(Json, PredictionSetFields) {
    PredictionSet s;
    s.alpha = 0.1;
    s.intervals.push_back({-1.0, 2.0, BoundarySource::RankCrossing, BoundarySource::RangeClip});
    s.is_single_interval = true;
    s.n_segments = 4;
    nlohmann::json j = to_json(s);
    EXPECT_EQ(j["alpha"], 0.1);
    EXPECT_EQ(j["intervals"][0][0], -1.0);
    EXPECT_EQ(j["intervals"][0][1], 2.0);
    EXPECT_EQ(j["boundary_sources"][0][0], "rank_crossing");
    EXPECT_EQ(j["boundary_sources"][0][1], "range_clip");
    EXPECT_EQ(j["single_interval"], true);
    EXPECT_EQ(j["n_segments"], 4);
}

TEST(Csv, GridOutput) {
    GridResult g;
    g.y = {0.0, 0.5};
    g.in_set = {true, false};
    std::ostringstream os;
    write_grid_csv(os, g);
    EXPECT_EQ(os.str(), "y,in_set\n0,1\n0.5,0\n");
}
