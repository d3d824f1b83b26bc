double dot(int n, const double *x, const double *y)
{
    double sum = 0.0;
    #pragma acc parallel loop reduction(+:sum) present(x[0:n], y[0:n])
    for (int i = 0; i < n; ++i) {
        sum += x[i] * y[i];
    }
    return sum;
}

void scale(int n, double *v, double s)
{
    #pragma acc kernels
    {
        #pragma acc loop gang vector
        for (int k = 0; k < n; ++k)
            v[k] *= s;
    }
}
