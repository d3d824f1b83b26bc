int find(int n, const int *v, int key)
{
    int pos = -1;
    #pragma acc parallel loop
    for (int i = 0; i < n; i++) {
        if (v[i] == key) {
            pos = i;
            break;
        }
    }
    return pos;
}

int first_negative(int n, const int *v)
{
    #pragma acc parallel loop
    for (int i = 0; i < n; i++) {
        if (v[i] < 0)
            return i;
    }
    return -1;
}

void classify(int n, const int *v, int *out)
{
    #pragma acc parallel loop copyin(v[0:n]) copyout(out[0:n])
    for (int i = 0; i < n; i++) {
        switch (v[i] % 3) {
        case 0:
            out[i] = 10;
            break;
        default:
            out[i] = 20;
            break;
        }
    }
}
