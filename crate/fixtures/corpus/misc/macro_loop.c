#define FOR_EACH(i, n) for (int i = 0; i < (n); ++i)

void fill(int n, int *p)
{
    #pragma acc parallel loop
    FOR_EACH(i, n) {
        p[i] = i;
    }
}
