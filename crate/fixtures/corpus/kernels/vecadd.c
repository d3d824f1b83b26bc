#include <stdlib.h>

void vecadd(int n, const float *a, const float *b, float *c)
{
    int i;
#pragma acc data copyin(a[0:n], b[0:n]) copyout(c[0:n])
    {
        c[0] = 0.0f;
    }
#pragma acc parallel loop copyin(a[0 : n], b[0 : n]) copyout(c[0:n])
    for (i = 0; i < n; i++) {
        c[i] = a[i] + b[i];
    }
}
