/*
 * fprintf result tested against the wrong sentinel.
 */
#include <stdio.h>

static void goodB2G()
{
    if (fprintf(stdout, "%s\n", "hello") < 0)
    {
        printf("write failed\n");
    }
}

void CWE253_Incorrect_Check_of_Function_Return_Value__fprintf_01_good()
{
    goodB2G();
}

int main(int argc, char * argv[])
{
    CWE253_Incorrect_Check_of_Function_Return_Value__fprintf_01_good();
    return 0;
}

