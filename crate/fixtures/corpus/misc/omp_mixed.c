#pragma once

void both(int n, double *u)
{
    #pragma omp parallel for
    for (int i = 0; i < n; i++)
        u[i] = u[i] * 0.5;

    #pragma acc parallel loop vector_length(128)
    for (int i = 0; i < n; i++)
        u[i] = u[i] + 1.0;
}
