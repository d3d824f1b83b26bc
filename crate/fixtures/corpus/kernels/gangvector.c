void matvec(int rows, int cols, const float *m, const float *x, float *y)
{
    #pragma acc parallel loop gang present(m, x, y)
    for (int r = 0; r < rows; r++) {
        float acc = 0.0f;
        #pragma acc loop vector reduction(+:acc)
        for (int c = 0; c < cols; c++) {
            acc += m[r * cols + c] * x[c];
        }
        y[r] = acc;
    }
}
