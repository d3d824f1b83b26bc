int broken(int x)
{
    return x +
}

void ok(int n, float *z)
{
    #pragma acc parallel loop independent
    for (int i = 0; i < n; i++) {
        z[i] = -z[i];
    }
}
