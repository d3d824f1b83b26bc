void saxpy_region(int n, float a, float *x, float *y)
{
#pragma acc data copyin(x[0:n])
#pragma acc parallel loop present(x[0:n]) copy(y[0:n])
    for (int i = 0; i < n; i++)
        y[i] = a * x[i] + 2.0f * y[i];
}
