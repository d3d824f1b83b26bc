void host_sync(double *a);

void relax(int n, double *a, double tol)
{
    double err = 1.0;
    #pragma acc parallel loop
    while (err > tol) {
        err *= 0.5;
    }
    #pragma acc loop
    int unused = 0;
    #pragma acc update host(a[0:n])
    host_sync(a);
    #pragma acc serial loop
    for (int i = 1; i < n; i++) {
        a[i] += a[i - 1];
    }
}
