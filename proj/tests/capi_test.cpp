// Exercises the public C surface through the shared library only.

#include "blocknet/blocknet.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(CapiStatusTest, NamesAreStable) {
  EXPECT_STREQ(bn_status_name(BN_OK), "ok");
  EXPECT_STREQ(bn_status_name(BN_ERR_BAD_MAGIC), "bad magic");
  EXPECT_STREQ(bn_status_name(BN_ERR_DIGEST_MISMATCH), "base model digest mismatch");
}

TEST(CapiDatasetTest, GenerateWriteReadRoundTrip) {
  TempDir dir("bn_capi_ds");
  bn_dataset* ds = nullptr;
  ASSERT_EQ(bn_dataset_generate("blt_srp", 64, 7, 1, &ds), BN_OK);
  ASSERT_NE(ds, nullptr);
  EXPECT_EQ(bn_dataset_size(ds), 64u);
  EXPECT_STREQ(bn_dataset_task(ds), "blt_srp");

  const std::string path = (dir.path / "toy.bnds").string();
  ASSERT_EQ(bn_dataset_write(ds, path.c_str()), BN_OK);
  bn_dataset_free(ds);

  bn_dataset* back = nullptr;
  ASSERT_EQ(bn_dataset_read(path.c_str(), &back), BN_OK);
  EXPECT_EQ(bn_dataset_size(back), 64u);
  bn_dataset_free(back);
}

TEST(CapiDatasetTest, ErrorsCarryCodesAndMessages) {
  bn_dataset* ds = nullptr;
  EXPECT_EQ(bn_dataset_generate("no_such_task", 10, 0, 1, &ds),
            BN_ERR_INVALID_ARGUMENT);
  EXPECT_NE(std::string(bn_last_error()).find("no_such_task"), std::string::npos);

  TempDir dir("bn_capi_err");
  const std::string bad = (dir.path / "bad.bnds").string();
  std::ofstream(bad, std::ios::binary) << "XXXXXXXXXXXXXXXXXXXXXXXX";
  EXPECT_EQ(bn_dataset_read(bad.c_str(), &ds), BN_ERR_BAD_MAGIC);
  EXPECT_EQ(bn_dataset_read((dir.path / "missing.bnds").string().c_str(), &ds),
            BN_ERR_IO);
}

TEST(CapiTrainEvalTest, TrainFromConfigThenEvaluate) {
  TempDir dir("bn_capi_train");
  const std::string config_path = (dir.path / "exp.cfg").string();
  {
    std::ofstream cfg(config_path);
    cfg << "mode=scratch\n"
        << "task=blt_srp\n"
        << "net_spec=8,4\n"
        << "train_size=300\n"
        << "test_size=120\n"
        << "repetitions=1\n"
        << "master_seed=5\n"
        << "max_epochs=3\n";
  }
  double summary[4] = {-1, -1, -1, -1};
  ASSERT_EQ(bn_cmd_train(config_path.c_str(), dir.path.string().c_str(), 1, summary),
            BN_OK)
      << bn_last_error();
  EXPECT_GE(summary[0], 0.0);
  EXPECT_LE(summary[0], 100.0);
  EXPECT_EQ(summary[0], summary[1]);  // one repetition
  EXPECT_EQ(summary[0], summary[2]);
  EXPECT_GT(summary[3], 0.0);

  // The trained model landed under models/ and evaluates through the C API.
  std::string model_path;
  for (const auto& entry : fs::directory_iterator(dir.path / "models")) {
    if (entry.path().extension() == ".bnmd") model_path = entry.path().string();
  }
  ASSERT_FALSE(model_path.empty());

  bn_model* model = nullptr;
  ASSERT_EQ(bn_model_load(model_path.c_str(), &model), BN_OK);
  EXPECT_EQ(bn_model_param_count(model), summary[3]);

  bn_dataset* ds = nullptr;
  ASSERT_EQ(bn_dataset_generate("blt_srp", 100, 321, 1, &ds), BN_OK);
  double err = -1.0;
  ASSERT_EQ(bn_model_evaluate(model, ds, &err), BN_OK);
  EXPECT_GE(err, 0.0);
  EXPECT_LE(err, 100.0);
  bn_dataset_free(ds);
  bn_model_free(model);
}

TEST(CapiTrainEvalTest, BadConfigPathIsIoError) {
  EXPECT_EQ(bn_cmd_train("/nonexistent/nope.cfg", "/tmp", 1, nullptr), BN_ERR_IO);
}

TEST(CapiVerifyTest, SelfChecksPass) {
  EXPECT_EQ(bn_cmd_verify(42), BN_OK) << bn_last_error();
}
