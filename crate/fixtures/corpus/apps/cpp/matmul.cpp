#include <vector>

void matmul(int n, const double *A, const double *B, double *C)
{
    #pragma acc parallel loop collapse(2) present(A[0:n*n], B[0:n*n], C[0:n*n])
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < n; ++k)
                s += A[i * n + k] * B[k * n + j];
            C[i * n + j] = s;
        }
    }
}

void bump(std::vector<double> &v)
{
    #pragma acc parallel loop
    for (auto &x : v) {
        x += 1.0;
    }
}
