void pipeline(int n, float *buf)
{
    #pragma acc parallel loop async(1) present(buf[0:n])
    for (int i = 0; i < n; i++) {
        buf[i] = buf[i] + 3.0f;
    }
    #pragma acc wait(1)
    return;
}
