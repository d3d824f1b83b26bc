/* A copy of axpy from another project, annotated differently. */
void axpy_copy(int n, float a, const float *x, float *y)
{
    #pragma acc kernels loop independent
    for (int i = 0; i < n; i++) {
        y[i] = a * x[i] + y[i];
    }
}
