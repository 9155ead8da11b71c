/*
 * free() applied to a stack buffer.
 */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

void CWE590_Free_Memory_Not_On_Heap__free_stack_01_bad()
{
    char * data;
    char dataBuffer[100];
    memset(dataBuffer, 'A', 100 - 1);
    dataBuffer[100 - 1] = '\0';
    data = dataBuffer;
    printf("%s\n", data);
    /* data points to the stack, not the heap */
    free(data);
}

int main(int argc, char * argv[])
{
    CWE590_Free_Memory_Not_On_Heap__free_stack_01_bad();
    return 0;
}

