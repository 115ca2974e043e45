#include "std_testcase.h"

void CWE476_NULL_Pointer_Dereference__int_51b_badSink(int * data) {
    printIntLine(*data);
}

void CWE476_NULL_Pointer_Dereference__int_51b_goodG2BSink(int * data) {
    printIntLine(*data);
}
