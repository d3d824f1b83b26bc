void axpy(int n, float a, const float *x, float *y)
{
    #pragma acc parallel loop
    for (int i = 0; i < n; i++) {
        y[i] = a * x[i] + y[i];
    }
}
