void clear(int n, int *flags)
{
    #pragma acc parallel loop async(2) // launch asynchronously
    /* the loop below is the target */
    for (int i = 0; i < n; i++) {
        flags[i] = 0;
    }
}
