#include "std_testcase.h"

void CWE476_NULL_Pointer_Dereference__int_51b_badSink(int * data);

void CWE476_NULL_Pointer_Dereference__int_51a_bad()
{
    int * data;
    data = NULL;
    CWE476_NULL_Pointer_Dereference__int_51b_badSink(data);
}

void CWE476_NULL_Pointer_Dereference__int_51b_goodG2BSink(int * data);

static void goodG2B()
{
    int * data;
    int tmpData = 5;
    data = &tmpData;
    CWE476_NULL_Pointer_Dereference__int_51b_goodG2BSink(data);
}

void CWE476_NULL_Pointer_Dereference__int_51a_good()
{
    goodG2B();
}
