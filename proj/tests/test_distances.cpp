#include <gtest/gtest.h>

#include <sstream>

#include "timbre/distances.hpp"
#include "timbre/errors.hpp"

using namespace timbre;

namespace {
LabeledVector lv(std::vector<double> v, std::string inst, std::string pitch)
{
    return {std::move(v), {{"instrument", std::move(inst)}, {"pitch", std::move(pitch)}}};
}
} // namespace

TEST(Distances, IdenticalVectorsGiveZeroSummary)
{
    std::vector<LabeledVector> v{lv({1, 2}, "a", "1"), lv({1, 2}, "a", "2"), lv({1, 2}, "a", "3")};
    const auto r = cluster_distances(v, {"instrument"});
    ASSERT_EQ(r.rows.size(), 1u);
    EXPECT_EQ(r.rows[0].n_pairs, 3u);
    EXPECT_EQ(r.rows[0].decile10, 0.0);
    EXPECT_EQ(r.rows[0].decile90, 0.0);
}

TEST(Distances, SinglePairIsSquaredDistance)
{
    std::vector<LabeledVector> v{lv({0, 0}, "a", "1"), lv({3, 4}, "a", "1")};
    const auto r = cluster_distances(v, {"instrument"});
    ASSERT_EQ(r.rows.size(), 1u);
    const auto& s = r.rows[0];
    EXPECT_EQ(s.n_pairs, 1u);
    for (double q : {s.decile10, s.q25, s.median, s.q75, s.decile90}) EXPECT_DOUBLE_EQ(q, 25.0);
}

TEST(Distances, QuantilesInterpolateLinearly)
{
    const std::vector<double> d{1, 2, 3, 4};
    EXPECT_DOUBLE_EQ(quantile(d, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(quantile(d, 0.1), 1.3);
    EXPECT_DOUBLE_EQ(quantile(d, 1.0), 4.0);
}

TEST(Distances, SubgroupsPoolWithinOuterKey)
{
    std::vector<LabeledVector> v{lv({0}, "a", "1"), lv({1}, "a", "1"), lv({10}, "a", "2"), lv({12}, "a", "2"),
                                 lv({5}, "b", "1")};
    const auto r = cluster_distances(v, {"instrument", "pitch"});
    ASSERT_EQ(r.rows.size(), 1u); // b has a single member and no pairs
    EXPECT_EQ(r.rows[0].grouping, "instrument+pitch");
    EXPECT_EQ(r.rows[0].group_id, "a");
    EXPECT_EQ(r.rows[0].n_pairs, 2u); // (0,1) and (10,12)
    EXPECT_DOUBLE_EQ(r.rows[0].median, 2.5);
    EXPECT_EQ(r.warnings.size(), 2u);
}

TEST(Distances, MissingLabelIsParameterError)
{
    std::vector<LabeledVector> v{lv({0}, "a", "1"), lv({1}, "a", "1")};
    EXPECT_THROW(cluster_distances(v, {"nuance"}), ParameterError);
}

TEST(Distances, CsvColumns)
{
    std::vector<LabeledVector> v{lv({0, 0}, "a", "1"), lv({3, 4}, "a", "1")};
    std::ostringstream out;
    write_distance_csv(out, cluster_distances(v, {"instrument"}).rows);
    EXPECT_EQ(out.str(), "grouping,group_id,decile10,q25,median,q75,decile90,n_pairs\n"
                         "instrument,a,25,25,25,25,25,1\n");
}
