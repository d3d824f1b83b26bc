#define N 512

void jacobi(double a[N][N], double b[N][N], int n)
{
    int i, j;
    #pragma acc parallel loop collapse(2) copyin(a) copyout(b)
    for (j = 1; j < n - 1; j++) {
      for (i = 1; i < n - 1; i++) {
        b[i][j] = 0.2 * (a[i][j] + a[i][j-1] + a[i][j+1] + a[i+1][j] + a[i-1][j]);
      }
    }
}
