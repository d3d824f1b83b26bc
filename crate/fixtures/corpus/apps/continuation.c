void copy2(int n, const double *a, double *b)
{
    #pragma acc parallel loop \
        copyin(a[0:n]) \
        copyout(b[0:n])
    for (int i = 0; i < n; i++)
        b[i] = 2.0 * a[i];
}
