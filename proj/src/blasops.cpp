#include "blasops.hpp"

#include <cblas.h>

extern "C" void openblas_set_num_threads(int);

namespace bn {

namespace {

struct BlasInit {
  BlasInit() { openblas_set_num_threads(1); }
};

void ensure_single_thread() {
  static BlasInit init;
}

}  // namespace

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c) {
  ensure_single_thread();
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, m, n, k, 1.0, a, k, b, k,
              0.0, c, n);
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c) {
  ensure_single_thread();
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, m, n, k, 1.0, a, m, b, n,
              0.0, c, n);
}

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c) {
  ensure_single_thread();
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, m, n, k, 1.0, a, k, b, n,
              0.0, c, n);
}

void gemm_nn_sub(int m, int n, int k, const double* a, const double* b, int ldb,
                 double* c) {
  ensure_single_thread();
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, m, n, k, 1.0, a, k, b, ldb,
              0.0, c, n);
}

}  // namespace bn
