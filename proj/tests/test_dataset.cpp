#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "oracles.hpp"
#include "relrep/dataset.hpp"

using namespace relrep;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

void write_text(const std::filesystem::path& p, const std::string& body) {
    std::ofstream out(p);
    out << body;
}

}  // namespace

TEST(CsvLoad, LabeledSmall) {
    auto p = temp_file("relrep_t_labeled.csv");
    write_text(p, "0.0,0.0,A\n1.0,0.0,A\n5.0,5.0,B\n");
    Dataset d = load_dataset(p.string(), DatasetFormat::csv);
    ASSERT_EQ(d.size(), 3);
    ASSERT_EQ(d.dim(), 2);
    ASSERT_TRUE(d.has_labels());
    EXPECT_EQ(d.labels[0], d.labels[1]);
    EXPECT_NE(d.labels[0], d.labels[2]);
    ASSERT_EQ(d.label_names.size(), 2u);
    EXPECT_EQ(d.label_names[0], "A");
    EXPECT_EQ(d.label_names[1], "B");
    EXPECT_DOUBLE_EQ(d.vectors(2, 0), 5.0);
    EXPECT_DOUBLE_EQ(d.vectors(2, 1), 5.0);
}

TEST(CsvLoad, UnlabeledWhenLastFieldNumeric) {
    auto p = temp_file("relrep_t_unlabeled.csv");
    write_text(p, "1.0,2.0\n3.0,4.0\n");
    Dataset d = load_dataset(p.string(), DatasetFormat::csv);
    EXPECT_EQ(d.size(), 2);
    EXPECT_EQ(d.dim(), 2);
    EXPECT_FALSE(d.has_labels());
}

TEST(CsvLoad, SkipsCommentsAndBlankLines) {
    auto p = temp_file("relrep_t_comments.csv");
    write_text(p, "# header\n\n1.0,2.0,A\n\n# middle\n3.0,4.0,B\n");
    Dataset d = load_dataset(p.string(), DatasetFormat::csv);
    EXPECT_EQ(d.size(), 2);
    EXPECT_TRUE(d.has_labels());
}

TEST(CsvLoad, EmptyFileFails) {
    auto p = temp_file("relrep_t_empty.csv");
    write_text(p, "# nothing here\n");
    try {
        load_dataset(p.string(), DatasetFormat::csv);
        FAIL() << "expected throw";
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find("empty dataset"), std::string::npos);
    }
}

TEST(CsvLoad, RaggedRowNamesOffendingRow) {
    auto p = temp_file("relrep_t_ragged.csv");
    write_text(p, "1.0,2.0,A\n3.0,B\n");
    try {
        load_dataset(p.string(), DatasetFormat::csv);
        FAIL() << "expected throw";
    } catch (const std::exception& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
    }
}

TEST(CsvLoad, BadValueNamesRowAndValue) {
    auto p = temp_file("relrep_t_badval.csv");
    write_text(p, "1.0,2.0,A\noops,4.0,B\n");
    try {
        load_dataset(p.string(), DatasetFormat::csv);
        FAIL() << "expected throw";
    } catch (const std::exception& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("oops"), std::string::npos) << msg;
    }
}

TEST(Synthetic, BalancedCountsAndNames) {
    SyntheticSpec spec;
    spec.num_classes = 2;
    spec.samples_per_class = 10;
    spec.dim = 2;
    spec.cluster_std = 0.1;
    spec.seed = 7;
    Dataset d = gen_synthetic(spec);
    ASSERT_EQ(d.size(), 20);
    ASSERT_EQ(d.dim(), 2);
    ASSERT_TRUE(d.has_labels());
    int c0 = 0, c1 = 0;
    for (int l : d.labels) (l == 0 ? c0 : c1)++;
    EXPECT_EQ(c0, 10);
    EXPECT_EQ(c1, 10);
    EXPECT_EQ(d.label_names[0], "c0");
    EXPECT_EQ(d.label_names[1], "c1");
}

TEST(Synthetic, DeterministicBitwise) {
    SyntheticSpec spec;
    spec.num_classes = 3;
    spec.samples_per_class = 5;
    spec.dim = 4;
    spec.cluster_std = 0.2;
    spec.seed = 99;
    Dataset a = gen_synthetic(spec);
    Dataset b = gen_synthetic(spec);
    EXPECT_TRUE(a.vectors == b.vectors);
    EXPECT_EQ(a.labels, b.labels);
}

TEST(Synthetic, ClassesSeparateInInputSpace) {
    SyntheticSpec spec;
    spec.num_classes = 3;
    spec.samples_per_class = 100;
    spec.dim = 8;
    spec.cluster_std = 0.2;
    spec.seed = 1;
    Dataset d = gen_synthetic(spec);
    double acc = oracle::knn_accuracy(d.vectors, d.labels, 5);
    EXPECT_GE(acc, 0.99);
    // class means should sit well apart relative to the point noise
    Eigen::MatrixXd means = Eigen::MatrixXd::Zero(3, 8);
    for (int i = 0; i < d.size(); ++i) means.row(d.labels[static_cast<std::size_t>(i)]) += d.vectors.row(i);
    means /= 100.0;
    for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b)
            EXPECT_GE((means.row(a) - means.row(b)).norm(), 5.0 * spec.cluster_std);
}

TEST(Synthetic, SpecValidation) {
    SyntheticSpec spec;
    spec.num_classes = 1;
    EXPECT_THROW(gen_synthetic(spec), std::invalid_argument);
    spec.num_classes = 2;
    spec.samples_per_class = 1;
    EXPECT_THROW(gen_synthetic(spec), std::invalid_argument);
    spec.samples_per_class = 2;
    spec.dim = 0;
    EXPECT_THROW(gen_synthetic(spec), std::invalid_argument);
    spec.dim = 1;
    spec.cluster_std = 0.0;
    EXPECT_THROW(gen_synthetic(spec), std::invalid_argument);
}

TEST(RoundTrip, RawExact) {
    SyntheticSpec spec;
    spec.num_classes = 3;
    spec.samples_per_class = 8;
    spec.dim = 5;
    spec.cluster_std = 0.3;
    spec.seed = 21;
    Dataset d = gen_synthetic(spec);
    auto p = temp_file("relrep_t_round.rrds");
    save_dataset(d, p.string(), DatasetFormat::raw_f32);
    Dataset back = load_dataset(p.string(), DatasetFormat::raw_f32);
    EXPECT_TRUE(d.vectors == back.vectors);
    EXPECT_EQ(d.labels, back.labels);
    EXPECT_TRUE(back.label_names.empty()) << "raw stores numeric labels only";
}

TEST(RoundTrip, CsvExactForQuantizedData) {
    SyntheticSpec spec;
    spec.num_classes = 2;
    spec.samples_per_class = 6;
    spec.dim = 3;
    spec.cluster_std = 0.5;
    spec.seed = 4;
    Dataset d = gen_synthetic(spec);
    auto p = temp_file("relrep_t_round.csv");
    save_dataset(d, p.string(), DatasetFormat::csv);
    Dataset back = load_dataset(p.string(), DatasetFormat::csv);
    ASSERT_EQ(back.size(), d.size());
    EXPECT_TRUE(d.vectors == back.vectors);
    EXPECT_EQ(d.labels, back.labels);
    EXPECT_EQ(d.label_names, back.label_names);
}

TEST(RoundTrip, CsvCloseForArbitraryDoubles) {
    Dataset d;
    d.vectors.resize(2, 2);
    d.vectors << 1.0 / 3.0, 2.0 / 7.0, -5.0 / 11.0, 1e-7;
    d.ids = {0, 1};
    auto p = temp_file("relrep_t_arb.csv");
    save_dataset(d, p.string(), DatasetFormat::csv);
    Dataset back = load_dataset(p.string(), DatasetFormat::csv);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            EXPECT_NEAR(d.vectors(i, j), back.vectors(i, j), 1e-6);
}

TEST(RawLoad, BadMagicFails) {
    auto p = temp_file("relrep_t_badmagic.rrds");
    write_text(p, "definitely not a dataset");
    try {
        load_dataset(p.string(), DatasetFormat::raw_f32);
        FAIL() << "expected throw";
    } catch (const std::exception& e) {
        EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
    }
}

TEST(RawLoad, TruncatedFails) {
    SyntheticSpec spec;
    spec.seed = 2;
    Dataset d = gen_synthetic(spec);
    auto p = temp_file("relrep_t_trunc.rrds");
    save_dataset(d, p.string(), DatasetFormat::raw_f32);
    auto sz = std::filesystem::file_size(p);
    std::filesystem::resize_file(p, sz - 3);
    EXPECT_THROW(load_dataset(p.string(), DatasetFormat::raw_f32), std::runtime_error);
}

TEST(Validate, RejectsNonFinite) {
    Dataset d;
    d.vectors.resize(2, 2);
    d.vectors << 1.0, 2.0, std::numeric_limits<double>::quiet_NaN(), 4.0;
    d.ids = {0, 1};
    EXPECT_THROW(detail::validate_dataset(d), std::runtime_error);
}

TEST(Validate, RejectsLabelMismatch) {
    Dataset d;
    d.vectors.resize(2, 2);
    d.vectors << 1.0, 2.0, 3.0, 4.0;
    d.ids = {0, 1};
    d.labels = {0};
    EXPECT_THROW(detail::validate_dataset(d), std::runtime_error);
}
