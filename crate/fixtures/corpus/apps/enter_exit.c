#include <stdlib.h>

void lifecycle(int n, double *a)
{
    #pragma acc enter data copyin(a[0:n])
    for (int i = 0; i < n; i++) {
        a[i] = a[i] * a[i];
    }
    #pragma acc exit data delete(a[0:n])
}
